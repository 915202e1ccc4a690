#include "hypergoal/dataset.hpp"

#include <cmath>
#include <cstdio>
#include "json.hpp"

#include "hypergoal/binio.hpp"
#include "hypergoal/errors.hpp"

namespace hypergoal {
namespace {

using nlohmann::json;

constexpr const char* kFormat = "hypergoal-dataset";

std::string traj_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "traj_%05zu.bin", i);
  return buf;
}

void round_observation(Observation& obs) {
  binio::round_f32(obs.image.data());
  binio::round_f32(obs.proprio);
}

std::size_t frame_floats(const EnvConfig& env) { return env.pixel_count() + kProprioDim + kActionDim; }

json env_to_json(const EnvConfig& env) {
  return {{"task", to_string(env.task)},
          {"difficulty", to_string(env.difficulty)},
          {"dt", env.dt},
          {"damping", env.damping},
          {"gain", env.gain},
          {"horizon", env.effective_horizon()},
          {"agent_radius", env.agent_radius},
          {"block_radius", env.block_radius},
          {"goal_radius", env.goal_radius},
          {"reach_tolerance", env.reach_tolerance},
          {"push_tolerance", env.push_tolerance}};
}

}  // namespace

std::size_t Dataset::frame_count() const {
  std::size_t n = 0;
  for (const auto& t : trajectories) n += t.length();
  return n;
}

Proprio standardize(const Proprio& raw, const Proprio& mean, const Proprio& std) {
  Proprio out{};
  for (std::size_t i = 0; i < kProprioDim; ++i) out[i] = (raw[i] - mean[i]) / std[i];
  return out;
}

void compute_proprio_stats(Dataset& d) {
  Proprio sum{}, sq{};
  const double n = static_cast<double>(d.frame_count());
  for (const auto& t : d.trajectories)
    for (const auto& o : t.observations)
      for (std::size_t i = 0; i < kProprioDim; ++i) sum[i] += o.proprio[i];
  for (std::size_t i = 0; i < kProprioDim; ++i) d.proprio_mean[i] = sum[i] / n;
  for (const auto& t : d.trajectories)
    for (const auto& o : t.observations)
      for (std::size_t i = 0; i < kProprioDim; ++i) {
        const double dv = o.proprio[i] - d.proprio_mean[i];
        sq[i] += dv * dv;
      }
  for (std::size_t i = 0; i < kProprioDim; ++i) d.proprio_std[i] = std::max(kStdFloor, std::sqrt(sq[i] / n));
}

Dataset generate_dataset(const EnvConfig& env, std::size_t count, std::uint64_t seed) {
  if (count == 0) throw ConfigError("generate_dataset: need at least one trajectory");
  Dataset d;
  d.env = env;
  d.env.horizon = env.effective_horizon();
  d.seed = seed;
  const int horizon = env.effective_horizon();
  std::size_t attempts = 0, failures = 0;
  for (std::uint64_t s = seed; d.trajectories.size() < count; ++s) {
    ++attempts;
    auto [state, obs] = env_reset(env, s);
    Trajectory traj;
    round_observation(obs);
    traj.observations.push_back(std::move(obs));
    bool done = is_success(env, state);
    for (int t = 0; t < horizon && !done; ++t) {
      Vec2 a = expert_action(env, state);
      a = {binio::round_f32(a.x), binio::round_f32(a.y)};
      StepResult r = env_step(env, state, a);
      state = r.state;
      done = r.done;
      round_observation(r.obs);
      traj.actions.push_back(a);
      traj.observations.push_back(std::move(r.obs));
    }
    if (done && traj.length() >= 2) {
      d.trajectories.push_back(std::move(traj));
    } else {
      ++failures;
      if (attempts >= 20 && 2 * failures > attempts)
        throw std::runtime_error("generate_dataset: expert failure rate above 50% (" +
                                 std::to_string(failures) + "/" + std::to_string(attempts) + ")");
    }
  }
  compute_proprio_stats(d);
  return d;
}

void save_dataset(const Dataset& d, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::size_t width = frame_floats(d.env);
  json lengths = json::array(), checksums = json::array();
  for (std::size_t i = 0; i < d.trajectories.size(); ++i) {
    const Trajectory& t = d.trajectories[i];
    std::vector<unsigned char> bytes;
    bytes.reserve(4 * width * t.length());
    for (std::size_t f = 0; f < t.length(); ++f) {
      const Observation& o = t.observations[f];
      binio::append_f32(bytes, o.image.data());
      binio::append_f32(bytes, o.proprio);
      const Vec2 a = f < t.actions.size() ? t.actions[f] : Vec2{};
      const double action[kActionDim] = {a.x, a.y};
      binio::append_f32(bytes, action);
    }
    binio::write_file(dir / traj_name(i), bytes);
    lengths.push_back(t.length());
    checksums.push_back(binio::hex64(binio::fnv1a64(bytes)));
  }
  json manifest = {{"format", kFormat},
                   {"version", kDatasetVersion},
                   {"task", to_string(d.env.task)},
                   {"difficulty", to_string(d.env.difficulty)},
                   {"num_trajectories", d.trajectories.size()},
                   {"seed", d.seed},
                   {"image_shape", {d.env.image_size, d.env.image_size}},
                   {"proprio_dim", kProprioDim},
                   {"action_dim", kActionDim},
                   {"proprio_mean", d.proprio_mean},
                   {"proprio_std", d.proprio_std},
                   {"lengths", lengths},
                   {"checksums", checksums},
                   {"env", env_to_json(d.env)}};
  binio::write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  if (!std::filesystem::exists(manifest_path))
    throw FormatError("dataset manifest missing: " + manifest_path.string());
  json m;
  try {
    m = json::parse(binio::read_text(manifest_path));
  } catch (const json::exception& e) {
    throw FormatError(std::string("dataset manifest is not valid JSON: ") + e.what());
  }
  if (m.value("format", "") != kFormat) throw FormatError("not a hypergoal dataset manifest");
  if (!m.contains("version") || m["version"] != kDatasetVersion)
    throw VersionError("unsupported dataset version " + m.value("version", json()).dump());

  try {
    Dataset d;
    const json& e = m.at("env");
    d.env.task = parse_task(m.at("task"));
    d.env.difficulty = parse_difficulty(m.at("difficulty"));
    d.env.dt = e.at("dt");
    d.env.damping = e.at("damping");
    d.env.gain = e.at("gain");
    d.env.horizon = e.at("horizon");
    d.env.agent_radius = e.at("agent_radius");
    d.env.block_radius = e.at("block_radius");
    d.env.goal_radius = e.at("goal_radius");
    d.env.reach_tolerance = e.at("reach_tolerance");
    d.env.push_tolerance = e.at("push_tolerance");
    const auto shape = m.at("image_shape").get<std::vector<std::size_t>>();
    if (shape.size() != 2 || shape[0] != shape[1] || shape[0] == 0)
      throw FormatError("dataset image_shape must be square");
    d.env.image_size = shape[0];
    if (m.at("proprio_dim") != kProprioDim || m.at("action_dim") != kActionDim)
      throw FormatError("dataset proprio/action dims do not match this build");
    d.seed = m.at("seed");
    d.proprio_mean = m.at("proprio_mean").get<Proprio>();
    d.proprio_std = m.at("proprio_std").get<Proprio>();

    const auto lengths = m.at("lengths").get<std::vector<std::size_t>>();
    const auto checksums = m.at("checksums").get<std::vector<std::string>>();
    const std::size_t count = m.at("num_trajectories");
    if (lengths.size() != count || checksums.size() != count || count == 0)
      throw FormatError("dataset manifest trajectory counts disagree");

    const std::size_t width = frame_floats(d.env);
    const std::size_t pixels = d.env.pixel_count();
    for (std::size_t i = 0; i < count; ++i) {
      const auto path = dir / traj_name(i);
      if (!std::filesystem::exists(path)) throw FormatError("missing trajectory file " + path.string());
      const auto bytes = binio::read_file(path);
      if (bytes.size() != 4 * width * lengths[i])
        throw ShapeError("trajectory " + path.filename().string() + " has " + std::to_string(bytes.size()) +
                         " bytes, expected " + std::to_string(4 * width * lengths[i]));
      if (binio::hex64(binio::fnv1a64(bytes)) != checksums[i])
        throw FormatError("checksum mismatch in " + path.filename().string());
      if (lengths[i] < 2) throw FormatError("trajectory shorter than two frames");
      const auto values = binio::decode_f32(bytes);
      Trajectory t;
      for (std::size_t f = 0; f < lengths[i]; ++f) {
        const double* row = values.data() + f * width;
        Observation o;
        o.image = Tensor({d.env.image_size, d.env.image_size}, std::vector<double>(row, row + pixels));
        for (std::size_t k = 0; k < kProprioDim; ++k) o.proprio[k] = row[pixels + k];
        t.observations.push_back(std::move(o));
        if (f + 1 < lengths[i]) t.actions.push_back({row[pixels + kProprioDim], row[pixels + kProprioDim + 1]});
      }
      d.trajectories.push_back(std::move(t));
    }
    return d;
  } catch (const json::exception& e) {
    throw FormatError(std::string("dataset manifest field error: ") + e.what());
  }
}

}  // namespace hypergoal
