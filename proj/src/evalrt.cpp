#include "hypergoal/evalrt.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "hypergoal/binio.hpp"
#include "hypergoal/config.hpp"
#include "hypergoal/errors.hpp"

namespace hypergoal {

using nlohmann::json;

void validate(const RolloutConfig& cfg) {
  if (cfg.max_steps < 0) throw ConfigError("rollout.max_steps must be >= 0 (0 = environment horizon)");
  if (!(cfg.epsilon > 0.0)) throw ConfigError("rollout.epsilon must be positive");
}

Vec2 RandomAgent::act(const EnvState&, const Observation&) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double x = u(rng_);
  return {x, u(rng_)};
}

LearnedAgent::LearnedAgent(Checkpoint ckpt)
    : ckpt_(std::move(ckpt)), model_(resolve_model(ckpt_.config.model, ckpt_.env, ckpt_.variant)) {
  ckpt_.group(kEncoderPrefix);
  switch (ckpt_.variant) {
    case Variant::hypernet:
    case Variant::hypernet_no_shaping: ckpt_.group(kHypernetPrefix); break;
    case Variant::gcbc: ckpt_.group(kGcbcPrefix); break;
    case Variant::direct_map_scalar:
    case Variant::direct_map_bias: ckpt_.group(kDirectMapPrefix); break;
  }
}

LatentVector LearnedAgent::encode_image(const Tensor& image) const {
  if (image.size() != model_.encoder.input_dim)
    throw ShapeError("image has " + std::to_string(image.size()) + " pixels, checkpoint expects " +
                     std::to_string(model_.encoder.input_dim));
  return encode(ckpt_.group(kEncoderPrefix), model_.encoder, image);
}

const LatentVector& LearnedAgent::latent_for(const Tensor& image) {
  if (cached_latent_.size() == 0 || !(cached_image_ == image)) {
    cached_latent_ = encode_image(image);
    cached_image_ = image;
  }
  return cached_latent_;
}

void LearnedAgent::begin(const EnvConfig& env, std::uint64_t, const Observation&, const Tensor& goal_image,
                         const RolloutConfig& cfg) {
  if (env.pixel_count() != model_.encoder.input_dim)
    throw ConfigError("environment renders " + std::to_string(env.pixel_count()) + " pixels, checkpoint expects " +
                      std::to_string(model_.encoder.input_dim));
  regenerate_ = cfg.regenerate_every_step;
  goal_ = encode_image(goal_image);
  has_prev_ = false;
  has_theta_ = false;
  cached_latent_ = {};
}

Vec2 LearnedAgent::act(const EnvState&, const Observation& obs) {
  const LatentVector z = latent_for(obs.image);
  const Proprio s = standardize(obs.proprio, ckpt_.proprio_mean, ckpt_.proprio_std);
  if (!has_prev_) {
    prev_latent_ = z;
    prev_proprio_ = s;
  }
  const ObsWindow window = make_window(prev_latent_, z, prev_proprio_, s);

  Action a;
  switch (ckpt_.variant) {
    case Variant::gcbc: a = gcbc_forward(ckpt_.group(kGcbcPrefix), model_.gcbc, window, goal_); break;
    case Variant::hypernet:
    case Variant::hypernet_no_shaping:
      if (regenerate_ || !has_theta_) theta_ = generate_params(ckpt_.group(kHypernetPrefix), model_.hypernet, z, goal_);
      has_theta_ = true;
      a = policy_forward(theta_, model_.layout, window);
      break;
    case Variant::direct_map_scalar:
    case Variant::direct_map_bias:
      if (regenerate_ || !has_theta_)
        theta_ = direct_map_generate(ckpt_.group(kDirectMapPrefix), model_.direct_map, z, goal_);
      has_theta_ = true;
      a = policy_forward(theta_, model_.layout, window);
      break;
  }
  prev_latent_ = z;
  prev_proprio_ = s;
  has_prev_ = true;
  return a.vec();
}

std::optional<double> LearnedAgent::goal_distance(const Observation& obs) {
  return latent_distance(latent_for(obs.image), goal_, metric());
}

const std::vector<double>* LearnedAgent::current_params() const {
  return has_theta_ ? &theta_.values : nullptr;
}

RolloutResult rollout(Agent& agent, const EnvConfig& env, std::uint64_t env_seed, const Tensor& goal_image,
                      const RolloutConfig& cfg) {
  validate(cfg);
  const int limit = cfg.max_steps > 0 ? cfg.max_steps : env.effective_horizon();
  auto [state, obs] = env_reset(env, env_seed);
  agent.begin(env, env_seed, obs, goal_image, cfg);

  RolloutResult r;
  r.env_seed = env_seed;
  for (int t = 0; t < limit; ++t) {
    const auto start = std::chrono::steady_clock::now();
    const Vec2 action = agent.act(state, obs);
    r.inference_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    r.actions.push_back(action);
    if (cfg.record_params) {
      const auto* theta = agent.current_params();
      r.params.push_back(theta ? *theta : std::vector<double>{});
    }

    StepResult step = env_step(env, state, action);
    state = step.state;
    obs = std::move(step.obs);
    ++r.steps;

    bool detected = false;
    if (auto d = agent.goal_distance(obs)) {
      r.distances.push_back(*d);
      detected = *d < cfg.epsilon;
    }
    if (detected) r.auto_success = true;
    if (step.done) r.env_success = true;
    if ((detected && cfg.stop_on_detection) || step.done) break;
  }
  return r;
}

std::optional<Tensor> expert_goal_image(const EnvConfig& env, std::uint64_t env_seed) {
  auto [state, obs] = env_reset(env, env_seed);
  for (int t = 0; t < env.effective_horizon(); ++t) {
    StepResult step = env_step(env, state, expert_action(env, state));
    state = step.state;
    if (step.done) return std::move(step.obs.image);
  }
  return std::nullopt;
}

DetectionMetrics detection_metrics(std::span<const RolloutResult> results) {
  if (results.empty()) throw std::invalid_argument("detection_metrics: no rollouts");
  std::size_t autos = 0, envs = 0, agree = 0, both = 0;
  for (const auto& r : results) {
    autos += r.auto_success;
    envs += r.env_success;
    agree += r.auto_success == r.env_success;
    both += r.auto_success && r.env_success;
  }
  const double n = static_cast<double>(results.size());
  DetectionMetrics m{autos / n, envs / n, agree / n, std::nullopt};
  if (envs > 0) m.recall = static_cast<double>(both) / static_cast<double>(envs);
  return m;
}

double monotonicity_fraction(std::span<const double> d) {
  if (d.size() < 2) throw std::invalid_argument("monotonicity_fraction: need at least two distances");
  std::size_t down = 0;
  for (std::size_t i = 0; i + 1 < d.size(); ++i) down += d[i + 1] <= d[i] + 1e-9;
  return static_cast<double>(down) / static_cast<double>(d.size() - 1);
}

EvalReport evaluate(Agent& agent, const std::string& agent_name, const EnvConfig& env, std::size_t n,
                    std::uint64_t seed, const RolloutConfig& cfg) {
  if (n == 0) throw ConfigError("evaluate: n must be >= 1");
  validate(cfg);
  EvalReport report;
  report.agent = agent_name;
  report.env = env;
  report.rollout = cfg;
  report.seed = seed;

  // Every expert failure is skipped; the cap only guards against a broken expert.
  const std::uint64_t max_attempts = 100 * static_cast<std::uint64_t>(n);
  for (std::uint64_t s = seed; report.results.size() < n; ++s) {
    if (s - seed >= max_attempts) throw std::runtime_error("evaluate: the expert fails on too many seeds");
    auto goal = expert_goal_image(env, s);
    if (!goal) continue;
    report.results.push_back(rollout(agent, env, s, *goal, cfg));
  }

  report.n_rollouts = n;
  double steps_to_success = 0.0, mono = 0.0, seconds = 0.0;
  std::size_t mono_count = 0, total_steps = 0;
  for (const auto& r : report.results) {
    report.env_successes += r.env_success;
    report.auto_successes += r.auto_success;
    if (r.env_success) steps_to_success += static_cast<double>(r.steps);
    if (r.env_success && r.distances.size() >= 2) {
      mono += monotonicity_fraction(r);
      ++mono_count;
    }
    seconds += r.inference_seconds;
    total_steps += r.steps;
  }
  const DetectionMetrics m = detection_metrics(report.results);
  report.env_success_rate = m.env_success_rate;
  report.auto_success_rate = m.auto_success_rate;
  report.detection_accuracy = m.accuracy;
  report.detection_recall = m.recall;
  if (report.env_successes > 0) report.mean_steps_to_success = steps_to_success / report.env_successes;
  if (mono_count > 0) report.monotonicity = mono / static_cast<double>(mono_count);
  if (total_steps > 0) report.mean_inference_seconds_per_step = seconds / static_cast<double>(total_steps);
  return report;
}

double nearest_rank(std::vector<double> values, double quantile) {
  if (values.empty()) throw std::invalid_argument("nearest_rank: no values");
  if (!(quantile > 0.0 && quantile < 1.0)) throw std::invalid_argument("nearest_rank: quantile must lie in (0,1)");
  std::sort(values.begin(), values.end());
  const auto rank = static_cast<std::size_t>(std::ceil(quantile * static_cast<double>(values.size())));
  return values[std::max<std::size_t>(rank, 1) - 1];
}

double calibrate_epsilon(const LearnedAgent& agent, const Dataset& dataset, double quantile) {
  std::vector<double> d;
  for (const auto& tr : dataset.trajectories) {
    if (tr.length() < 2) continue;
    const auto& last = tr.observations.back().image;
    const auto& before = tr.observations[tr.length() - 2].image;
    d.push_back(latent_distance(agent.encode_image(before), agent.encode_image(last), agent.metric()));
  }
  if (d.empty()) throw ConfigError("calibrate_epsilon: dataset has no trajectories with two frames");
  return nearest_rank(std::move(d), quantile);
}

void export_curves(std::span<const RolloutResult> results, const std::filesystem::path& path) {
  if (results.empty()) throw std::invalid_argument("export_curves: no rollouts");
  std::ostringstream out;
  out << "rollout_id,step,distance,env_success\n" << std::setprecision(17);
  for (std::size_t i = 0; i < results.size(); ++i)
    for (std::size_t t = 0; t < results[i].distances.size(); ++t)
      out << i << ',' << t + 1 << ',' << results[i].distances[t] << ',' << (results[i].env_success ? 1 : 0) << '\n';
  binio::write_text(path, out.str());
}

std::vector<CurvePoint> read_curves(const std::filesystem::path& path) {
  std::istringstream in(binio::read_text(path));
  std::string line;
  if (!std::getline(in, line) || line != "rollout_id,step,distance,env_success")
    throw FormatError(path.string() + ": missing curves header");
  std::vector<CurvePoint> points;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    CurvePoint p{};
    char c1 = 0, c2 = 0, c3 = 0;
    int success = 0;
    if (!(row >> p.rollout_id >> c1 >> p.step >> c2 >> p.distance >> c3 >> success) || c1 != ',' || c2 != ',' ||
        c3 != ',')
      throw FormatError(path.string() + ": malformed row '" + line + "'");
    p.env_success = success != 0;
    points.push_back(p);
  }
  return points;
}

json report_json(const EvalReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json records = json::array();
  for (const auto& x : r.results) {
    json rec = {{"env_seed", x.env_seed},
                {"steps", x.steps},
                {"env_success", x.env_success},
                {"auto_success", x.auto_success},
                {"min_distance", x.distances.empty()
                                     ? json(nullptr)
                                     : json(*std::min_element(x.distances.begin(), x.distances.end()))},
                {"monotonicity", x.distances.size() >= 2 ? json(monotonicity_fraction(x)) : json(nullptr)}};
    records.push_back(rec);
  }
  return {{"agent", r.agent},
          {"env", r.env},
          {"rollout", r.rollout},
          {"seed", r.seed},
          {"n_rollouts", r.n_rollouts},
          {"env_successes", r.env_successes},
          {"auto_successes", r.auto_successes},
          {"env_success_rate", r.env_success_rate},
          {"auto_success_rate", r.auto_success_rate},
          {"detection_accuracy", r.detection_accuracy},
          {"detection_recall", opt(r.detection_recall)},
          {"mean_steps_to_success", opt(r.mean_steps_to_success)},
          {"monotonicity", opt(r.monotonicity)},
          {"mean_inference_seconds_per_step", r.mean_inference_seconds_per_step},
          {"rollouts", records}};
}

void write_report(const EvalReport& report, const std::filesystem::path& path) {
  binio::write_text(path, report_json(report).dump(2) + "\n");
}

}  // namespace hypergoal
