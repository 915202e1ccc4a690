#include "hypergoal/trainer.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "hypergoal/binio.hpp"
#include "hypergoal/errors.hpp"

namespace hypergoal {
namespace {

constexpr const char* kEncoderGroup = "encoder";
constexpr const char* kDynamicsGroup = "dynamics";

std::string group_of(const std::string& name) { return name.substr(0, name.find('.')); }

void copy_row(Tensor& dst, std::size_t row, const Proprio& values) {
  std::copy(values.begin(), values.end(), dst.data().begin() + row * kProprioDim);
}

}  // namespace

Variant parse_variant(const std::string& text) {
  if (text == "hypernet") return Variant::hypernet;
  if (text == "hypernet_no_shaping") return Variant::hypernet_no_shaping;
  if (text == "gcbc") return Variant::gcbc;
  if (text == "direct_map_scalar") return Variant::direct_map_scalar;
  if (text == "direct_map_bias") return Variant::direct_map_bias;
  throw ConfigError("unknown variant '" + text +
                    "' (expected hypernet, hypernet_no_shaping, gcbc, direct_map_scalar or direct_map_bias)");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::hypernet: return "hypernet";
    case Variant::hypernet_no_shaping: return "hypernet_no_shaping";
    case Variant::gcbc: return "gcbc";
    case Variant::direct_map_scalar: return "direct_map_scalar";
    case Variant::direct_map_bias: return "direct_map_bias";
  }
  return "?";
}

bool uses_shaping(Variant v) { return v != Variant::hypernet_no_shaping; }

void validate(const TrainConfig& c) {
  if (c.epochs == 0) throw ConfigError("train.epochs must be positive");
  if (c.batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (!(c.lr0 > 0.0)) throw ConfigError("train.lr0 must be positive");
  if (!(c.grad_clip > 0.0)) throw ConfigError("train.grad_clip must be positive");
  if (!(c.adam.beta1 >= 0.0 && c.adam.beta1 < 1.0) || !(c.adam.beta2 >= 0.0 && c.adam.beta2 < 1.0) ||
      !(c.adam.eps > 0.0))
    throw ConfigError("train.adam: betas must lie in [0,1) and eps must be positive");
  validate(c.shaping);
  const ModelConfig& m = c.model;
  if (m.latent_dim == 0 || m.encoder_hidden == 0 || m.policy_hidden == 0 || m.embed_dim == 0 || m.embed_hidden == 0 ||
      m.block_hidden == 0 || m.dynamics_hidden == 0)
    throw ConfigError("model widths must be positive");
  if (!(m.max_step > 0.0)) throw ConfigError("model.max_step must be positive");
  if (!(m.head_gain >= 0.0)) throw ConfigError("model.head_gain must be >= 0");
}

Model resolve_model(const ModelConfig& c, const EnvConfig& env, Variant variant) {
  Model m;
  m.variant = variant;
  m.encoder = EncoderConfig{env.pixel_count(), c.encoder_hidden, c.latent_dim};
  m.layout = default_policy_layout(c.latent_dim, c.policy_hidden);
  m.hypernet.latent_dim = c.latent_dim;
  m.hypernet.embed_dim = c.embed_dim;
  m.hypernet.embed_hidden = c.embed_hidden;
  m.hypernet.block_hidden = c.block_hidden;
  m.hypernet.num_blocks = c.num_blocks;
  m.hypernet.max_step = c.max_step;
  m.hypernet.learned_init = c.learned_init;
  m.hypernet.head_gain = c.head_gain;
  m.hypernet.layout = m.layout;
  m.direct_map = DirectMapConfig{c.latent_dim,
                                 variant == Variant::direct_map_scalar ? InitScheme::scalar_init : InitScheme::bias_init,
                                 c.direct_map_scale, m.layout};
  m.gcbc.latent_dim = c.latent_dim;
  m.gcbc.hidden = c.gcbc_hidden > 0 ? c.gcbc_hidden : matched_gcbc_hidden(c.latent_dim, hypernet_param_count(m.hypernet));
  m.dynamics = DynamicsConfig{c.latent_dim, c.dynamics_hidden};
  return m;
}

const ParamSet& Checkpoint::group(const std::string& name) const {
  auto it = groups.find(name);
  if (it == groups.end()) throw ConfigError("checkpoint has no '" + name + "' parameter group");
  return it->second;
}

std::map<std::string, ParamSet> init_groups(const Model& model, Rng& rng) {
  std::map<std::string, ParamSet> groups;
  groups[kEncoderGroup] = init_encoder(model.encoder, rng);
  switch (model.variant) {
    case Variant::hypernet:
    case Variant::hypernet_no_shaping: groups[kHypernetPrefix] = init_hypernet(model.hypernet, rng); break;
    case Variant::gcbc: groups[kGcbcPrefix] = init_gcbc(model.gcbc, rng); break;
    case Variant::direct_map_scalar:
    case Variant::direct_map_bias: groups[kDirectMapPrefix] = init_direct_map(model.direct_map, rng); break;
  }
  if (uses_shaping(model.variant)) groups[kDynamicsGroup] = init_dynamics(model.dynamics, rng);
  return groups;
}

std::size_t sample_goal_index(std::size_t t, std::size_t n, Rng& rng) {
  if (t < 1 || t >= n) throw std::invalid_argument("sample_goal_index: need 1 <= t < N");
  return std::uniform_int_distribution<std::size_t>(t + 1, n)(rng);
}

Batch assemble_batch(const Dataset& d, std::span<const SampleIndex> samples, std::size_t dist_samples,
                     DistReference reference) {
  if (samples.empty()) throw ShapeError("assemble_batch: empty batch");
  Batch b;
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> rows;
  std::vector<const Tensor*> frames;
  auto row = [&](std::size_t traj, std::size_t f) {
    auto [it, fresh] = rows.try_emplace({traj, f}, frames.size());
    if (fresh) frames.push_back(&d.trajectories[traj].observations[f].image);
    return it->second;
  };

  const std::size_t n = samples.size();
  b.proprio_prev = Tensor::zeros(n, kProprioDim);
  b.proprio_cur = Tensor::zeros(n, kProprioDim);
  b.actions = Tensor::zeros(n, kActionDim);
  for (std::size_t i = 0; i < n; ++i) {
    const SampleIndex& s = samples[i];
    const Trajectory& tr = d.trajectories.at(s.traj);
    if (s.t + 1 >= tr.length() || s.goal <= s.t || s.goal >= tr.length())
      throw ShapeError("assemble_batch: sample indices out of range");
    const std::size_t p = s.t > 0 ? s.t - 1 : s.t;
    b.prev.push_back(row(s.traj, p));
    b.cur.push_back(row(s.traj, s.t));
    b.next.push_back(row(s.traj, s.t + 1));
    b.goal.push_back(row(s.traj, s.goal));
    copy_row(b.proprio_prev, i, standardize(tr.observations[p].proprio, d.proprio_mean, d.proprio_std));
    copy_row(b.proprio_cur, i, standardize(tr.observations[s.t].proprio, d.proprio_mean, d.proprio_std));
    b.actions.at(i, 0) = tr.actions[s.t].x;
    b.actions.at(i, 1) = tr.actions[s.t].y;
  }
  for (std::size_t i = 0; i < std::min(dist_samples, n); ++i) {
    const SampleIndex& s = samples[i];
    std::vector<std::size_t> seg;
    for (std::size_t f = s.t; f <= s.goal; ++f) seg.push_back(row(s.traj, f));
    b.segments.push_back(std::move(seg));
    b.segment_refs.push_back(reference == DistReference::goal ? b.goal[i] : b.cur[i]);
  }

  const std::size_t pixels = frames.front()->size();
  b.images = Tensor::zeros(frames.size(), pixels);
  for (std::size_t r = 0; r < frames.size(); ++r)
    std::copy(frames[r]->data().begin(), frames[r]->data().end(), b.images.data().begin() + r * pixels);
  return b;
}

NodeId bc_loss(Graph& g, NodeId predicted, NodeId target) {
  if (g.value(predicted).shape() != g.value(target).shape())
    throw ShapeError("bc_loss: prediction " + shape_string(g.value(predicted).shape()) + " vs target " +
                     shape_string(g.value(target).shape()));
  if (g.value(target).rows() == 0) throw ShapeError("bc_loss: empty batch");
  return g.mean(g.square(g.sub(target, predicted)));
}

LossNodes total_loss(Binder& bind, const Model& model, const Batch& b, const ShapingConfig& shaping, bool shaping_on) {
  Graph& g = bind.graph();
  auto z = encode(bind, model.encoder, g.input("images", b.images));
  auto z_prev = g.gather_rows(z, b.prev);
  auto z_cur = g.gather_rows(z, b.cur);
  auto z_goal = g.gather_rows(z, b.goal);
  auto features = g.concat_cols({z_prev, z_cur, g.input("proprio_prev", b.proprio_prev),
                                 g.input("proprio_cur", b.proprio_cur)});
  auto actions = g.input("actions", b.actions);

  NodeId predicted;
  switch (model.variant) {
    case Variant::hypernet:
    case Variant::hypernet_no_shaping:
      predicted = policy_forward(g, model.layout, generate_params(bind, model.hypernet, z_cur, z_goal), features);
      break;
    case Variant::direct_map_scalar:
    case Variant::direct_map_bias:
      predicted = policy_forward(g, model.layout, direct_map_generate(bind, model.direct_map, z_cur, z_goal), features);
      break;
    case Variant::gcbc: predicted = gcbc_forward(bind, model.gcbc, features, z_goal); break;
  }

  LossNodes out;
  out.policy = bc_loss(g, predicted, actions);
  if (!shaping_on) {
    out.pred = g.constant(Tensor::scalar(0.0));
    out.dist = g.constant(Tensor::scalar(0.0));
    out.total = out.policy;
    return out;
  }
  out.pred = pred_loss(bind, model.dynamics, z_cur, actions, g.gather_rows(z, b.next));
  if (b.segments.empty()) {
    out.dist = g.constant(Tensor::scalar(0.0));
  } else {
    std::vector<NodeId> parts;
    for (std::size_t s = 0; s < b.segments.size(); ++s)
      parts.push_back(dist_loss(g, g.gather_rows(z, b.segments[s]), g.gather_rows(z, {b.segment_refs[s]}), shaping));
    out.dist = g.mean(g.concat_cols(parts));
  }
  out.total = g.add(out.policy, g.add(g.scale(out.pred, shaping.lambda_pred), g.scale(out.dist, shaping.lambda_dist)));
  return out;
}

TrainResult train(const Dataset& d, const TrainConfig& cfg, Variant variant, const EpochCallback& on_epoch) {
  validate(cfg);
  if (d.trajectories.empty()) throw ConfigError("train: dataset is empty");
  const Model model = resolve_model(cfg.model, d.env, variant);
  const bool shaping_on = uses_shaping(variant);

  Rng rng(cfg.seed);
  TrainResult result;
  Checkpoint& ckpt = result.checkpoint;
  ckpt.variant = variant;
  ckpt.config = cfg;
  ckpt.env = d.env;
  ckpt.proprio_mean = d.proprio_mean;
  ckpt.proprio_std = d.proprio_std;
  ckpt.groups = init_groups(model, rng);

  std::vector<SampleIndex> samples;
  for (std::size_t i = 0; i < d.trajectories.size(); ++i)
    for (std::size_t t = 0; t + 1 < d.trajectories[i].length(); ++t) samples.push_back({i, t, 0});
  if (samples.empty()) throw ConfigError("train: dataset has no transitions");

  std::map<std::string, AdamState> optim;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cosine_lr(epoch, cfg.epochs, cfg.lr0);
    const bool encoder_frozen = epoch < cfg.encoder_freeze_epochs;
    std::shuffle(samples.begin(), samples.end(), rng);
    for (auto& s : samples) s.goal = sample_goal_index(s.t + 1, d.trajectories[s.traj].length(), rng) - 1;

    EpochLog log{epoch + 1, 0, 0, 0, 0, lr};
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < samples.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(samples.size(), begin + cfg.batch_size);
      const Batch batch = assemble_batch(d, std::span(samples).subspan(begin, end - begin),
                                         cfg.dist_samples_per_batch, cfg.shaping.reference);
      Graph g;
      Binder bind(g);
      for (const auto& [name, params] : ckpt.groups) bind.attach(params, !(name == kEncoderGroup && encoder_frozen));
      LossNodes loss;
      try {
        loss = total_loss(bind, model, batch, cfg.shaping, shaping_on);
      } catch (const NonFiniteError& e) {
        throw NonFiniteError("training diverged at epoch " + std::to_string(epoch + 1) + ": " + e.what(), e.node());
      }
      GradientMap grads = g.backward(loss.total);
      clip_global_norm(grads, cfg.grad_clip);
      std::map<std::string, GradientMap> by_group;
      for (auto& [name, grad] : grads) by_group[group_of(name)].emplace(name, std::move(grad));
      for (auto& [group, group_grads] : by_group) adam_step(ckpt.groups.at(group), group_grads, optim[group], lr, cfg.adam);

      log.total += g.scalar(loss.total);
      log.policy += g.scalar(loss.policy);
      log.pred += g.scalar(loss.pred);
      log.dist += g.scalar(loss.dist);
      ++batches;
    }
    const double nb = static_cast<double>(batches);
    log.total /= nb;
    log.policy /= nb;
    log.pred /= nb;
    log.dist /= nb;
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
  }

  for (auto& [name, params] : ckpt.groups)
    for (auto& [pname, t] : params.entries()) binio::round_f32(t.data());
  ckpt.epoch = cfg.epochs;
  std::ostringstream state;
  state << rng;
  ckpt.rng_state = state.str();
  return result;
}

TrainConfig tiny_grad_config() {
  TrainConfig c;
  c.encoder_freeze_epochs = 0;
  c.model.latent_dim = 4;
  c.model.encoder_hidden = 8;
  c.model.policy_hidden = 6;
  c.model.embed_dim = 4;
  c.model.embed_hidden = 8;
  c.model.block_hidden = 6;
  c.model.num_blocks = 2;
  c.model.dynamics_hidden = 8;
  c.model.gcbc_hidden = 0;
  return c;
}

FdReport check_total_loss_gradients(const Dataset& d, const TrainConfig& cfg, Variant variant, std::size_t batch_size,
                                    std::uint64_t seed) {
  validate(cfg);
  if (batch_size == 0) throw ConfigError("gradient check needs a positive batch size");
  const Model model = resolve_model(cfg.model, d.env, variant);
  Rng rng(seed);
  const auto groups = init_groups(model, rng);

  std::vector<SampleIndex> all;
  for (std::size_t i = 0; i < d.trajectories.size(); ++i)
    for (std::size_t t = 0; t + 1 < d.trajectories[i].length(); ++t) all.push_back({i, t, 0});
  if (all.size() < batch_size) throw ConfigError("gradient check: dataset has fewer transitions than the batch size");
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(batch_size);
  for (auto& s : all) s.goal = sample_goal_index(s.t + 1, d.trajectories[s.traj].length(), rng) - 1;

  const Batch batch = assemble_batch(d, all, cfg.dist_samples_per_batch, cfg.shaping.reference);
  Graph g;
  Binder bind(g);
  for (const auto& [name, params] : groups) bind.attach(params, true);
  const LossNodes loss = total_loss(bind, model, batch, cfg.shaping, uses_shaping(variant));
  return fd_check(g, loss.total);
}

void write_loss_csv(const std::vector<EpochLog>& log, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "epoch,total,policy,pred,dist,lr\n" << std::setprecision(17);
  for (const auto& e : log)
    out << e.epoch << ',' << e.total << ',' << e.policy << ',' << e.pred << ',' << e.dist << ',' << e.lr << '\n';
  binio::write_text(path, out.str());
}

}  // namespace hypergoal
