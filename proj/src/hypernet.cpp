#include "hypergoal/hypernet.hpp"

#include <cmath>

#include "hypergoal/errors.hpp"

namespace hypergoal {
namespace {

constexpr double kStdEpsilon = 1e-8;

std::string block_name(std::size_t k) { return std::string(kHypernetPrefix) + ".block" + std::to_string(k); }

std::vector<std::size_t> segment_ends(const PolicyLayout& layout) {
  std::vector<std::size_t> ends;
  for (const auto& layer : layout.layers()) ends.push_back(layer.end);
  return ends;
}

void check_latents(const Graph& g, NodeId zc, NodeId zg, std::size_t latent_dim) {
  const Tensor& a = g.value(zc);
  const Tensor& b = g.value(zg);
  if (a.cols() != latent_dim || b.cols() != latent_dim || a.rows() != b.rows())
    throw ShapeError("hypernetwork latents must both be [B," + std::to_string(latent_dim) + "], got " +
                     shape_string(a.shape()) + " and " + shape_string(b.shape()));
}

}  // namespace

PolicyLayout::PolicyLayout(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
  if (dims_.size() < 2) throw ShapeError("policy layout needs at least input and output widths");
  for (auto d : dims_)
    if (d == 0) throw ShapeError("policy layout widths must be >= 1");
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
    Layer layer{dims_[l], dims_[l + 1], offset, offset + dims_[l] * dims_[l + 1], 0};
    layer.end = layer.bias_offset + layer.out;
    offset = layer.end;
    layers_.push_back(layer);
  }
  count_ = offset;
}

std::vector<LayerParams> unpack(const ParamVector& theta, const PolicyLayout& layout) {
  if (theta.size() != layout.param_count())
    throw ShapeError("unpack: theta has " + std::to_string(theta.size()) + " entries, layout needs " +
                     std::to_string(layout.param_count()));
  std::vector<LayerParams> out;
  for (const auto& layer : layout.layers()) {
    const auto* base = theta.values.data();
    out.push_back({Tensor({layer.in, layer.out}, std::vector<double>(base + layer.weight_offset, base + layer.bias_offset)),
                   Tensor({1, layer.out}, std::vector<double>(base + layer.bias_offset, base + layer.end))});
  }
  return out;
}

ParamVector pack(const std::vector<LayerParams>& layers, const PolicyLayout& layout) {
  if (layers.size() != layout.num_layers()) throw ShapeError("pack: layer count mismatch");
  ParamVector theta;
  theta.values.reserve(layout.param_count());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& spec = layout.layers()[l];
    if (layers[l].weight.size() != spec.in * spec.out || layers[l].bias.size() != spec.out)
      throw ShapeError("pack: layer " + std::to_string(l) + " has the wrong shape");
    theta.values.insert(theta.values.end(), layers[l].weight.data().begin(), layers[l].weight.data().end());
    theta.values.insert(theta.values.end(), layers[l].bias.data().begin(), layers[l].bias.data().end());
  }
  return theta;
}

ParamVector init_policy_params(const PolicyLayout& layout, Rng& rng) {
  ParamVector theta{std::vector<double>(layout.param_count(), 0.0)};
  for (const auto& layer : layout.layers()) {
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(layer.in)));
    for (std::size_t p = layer.weight_offset; p < layer.bias_offset; ++p) theta.values[p] = normal(rng);
  }
  return theta;
}

ParamSet init_hypernet(const HypernetConfig& cfg, Rng& rng) {
  const PolicyLayout& layout = cfg.layout;
  const std::size_t n = layout.num_layers();
  const std::size_t block_in = cfg.embed_dim + 2 * n;
  const std::string prefix = kHypernetPrefix;

  ParamSet p;
  add_mlp(p, prefix + ".phi", {2 * cfg.latent_dim, cfg.embed_hidden, cfg.embed_dim}, rng);
  if (cfg.learned_init) {
    ParamVector theta0 = init_policy_params(layout, rng);
    p.add(prefix + ".theta0", Tensor({1, layout.param_count()}, std::move(theta0.values)));
  }
  for (std::size_t k = 0; k < cfg.num_blocks; ++k) {
    const std::string b = block_name(k);
    add_dense(p, b + ".in", block_in, cfg.block_hidden, rng);
    // The per-layer linear heads are stored side by side as one [hidden, P] map.
    add_dense(p, b + ".head", cfg.block_hidden, layout.param_count(), rng, cfg.head_gain);
    add_dense(p, b + ".step", block_in, n, rng);
  }
  return p;
}

std::size_t hypernet_param_count(const HypernetConfig& cfg) {
  const std::size_t p = cfg.layout.param_count();
  const std::size_t n = cfg.layout.num_layers();
  const std::size_t block_in = cfg.embed_dim + 2 * n;
  const std::size_t phi = 2 * cfg.latent_dim * cfg.embed_hidden + cfg.embed_hidden + cfg.embed_hidden * cfg.embed_dim +
                          cfg.embed_dim;
  const std::size_t block = block_in * cfg.block_hidden + cfg.block_hidden + cfg.block_hidden * p + p + block_in * n + n;
  return phi + (cfg.learned_init ? p : 0) + cfg.num_blocks * block;
}

NodeId embed_pair(Binder& bind, const HypernetConfig& cfg, NodeId z_current, NodeId z_goal) {
  Graph& g = bind.graph();
  check_latents(g, z_current, z_goal, cfg.latent_dim);
  auto joint = g.concat_cols({z_current, z_goal});
  return mlp(bind, std::string(kHypernetPrefix) + ".phi", 2, joint, Activation::tanh, Activation::identity);
}

NodeId initial_params(Binder& bind, const HypernetConfig& cfg, std::size_t rows) {
  Graph& g = bind.graph();
  if (!cfg.learned_init) return g.constant(Tensor::zeros(rows, cfg.layout.param_count()));
  auto theta0 = bind(std::string(kHypernetPrefix) + ".theta0");
  if (rows == 1) return theta0;
  return g.matmul(g.constant(Tensor::filled(rows, 1, 1.0)), theta0);
}

NodeId layer_statistics(Graph& g, const PolicyLayout& layout, NodeId theta) {
  return g.segment_moments(theta, segment_ends(layout), kStdEpsilon);
}

RefineOutputs refine_step(Binder& bind, const HypernetConfig& cfg, std::size_t block, NodeId theta,
                          NodeId alpha) {
  Graph& g = bind.graph();
  const PolicyLayout& layout = cfg.layout;
  if (g.value(theta).cols() != layout.param_count() || g.value(alpha).cols() != cfg.embed_dim ||
      g.value(theta).rows() != g.value(alpha).rows())
    throw ShapeError("refine_step: theta " + shape_string(g.value(theta).shape()) + " / alpha " +
                     shape_string(g.value(alpha).shape()) + " inconsistent with config");
  const std::string b = block_name(block);
  auto features = g.concat_cols({alpha, layer_statistics(g, layout, theta)});
  auto hidden = g.tanh(dense(bind, b + ".in", features));

  auto update = dense(bind, b + ".head", hidden);
  auto steps = g.scale(g.sigmoid(dense(bind, b + ".step", features)), cfg.max_step);
  return {g.segment_axpy(theta, steps, update, segment_ends(layout)), steps, update};
}

NodeId generate_params(Binder& bind, const HypernetConfig& cfg, NodeId z_current, NodeId z_goal) {
  auto alpha = embed_pair(bind, cfg, z_current, z_goal);
  auto theta = initial_params(bind, cfg, bind.graph().value(z_current).rows());
  for (std::size_t k = 0; k < cfg.num_blocks; ++k) theta = refine_step(bind, cfg, k, theta, alpha).theta;
  return theta;
}

ParamVector generate_params(const ParamSet& params, const HypernetConfig& cfg, const LatentVector& z_current,
                            const LatentVector& z_goal) {
  Graph g;
  Binder bind(g);
  bind.attach(params, false);
  auto theta = generate_params(bind, cfg, g.input("z_c", Tensor::row(z_current.values)),
                               g.input("z_g", Tensor::row(z_goal.values)));
  return ParamVector{g.value(theta).values()};
}

std::vector<double> embed_pair(const ParamSet& params, const HypernetConfig& cfg, const LatentVector& z_current,
                               const LatentVector& z_goal) {
  Graph g;
  Binder bind(g);
  bind.attach(params, false);
  auto alpha = embed_pair(bind, cfg, g.input("z_c", Tensor::row(z_current.values)),
                          g.input("z_g", Tensor::row(z_goal.values)));
  return g.value(alpha).values();
}

ParamSet init_direct_map(const DirectMapConfig& cfg, Rng& rng) {
  const std::string prefix = kDirectMapPrefix;
  const std::size_t in = 2 * cfg.latent_dim;
  const std::size_t out = cfg.layout.param_count();
  ParamSet p;
  if (cfg.scheme == InitScheme::scalar_init) {
    add_dense(p, prefix + ".map", in, out, rng);
    p.add(prefix + ".scale", Tensor::scalar(cfg.initial_scale));
  } else {
    ParamVector bias = init_policy_params(cfg.layout, rng);
    p.add(prefix + ".map.w", Tensor::zeros(in, out));
    p.add(prefix + ".map.b", Tensor({1, out}, std::move(bias.values)));
  }
  return p;
}

NodeId direct_map_generate(Binder& bind, const DirectMapConfig& cfg, NodeId z_current, NodeId z_goal) {
  Graph& g = bind.graph();
  check_latents(g, z_current, z_goal, cfg.latent_dim);
  const std::string prefix = kDirectMapPrefix;
  auto theta = dense(bind, prefix + ".map", g.concat_cols({z_current, z_goal}));
  if (cfg.scheme == InitScheme::scalar_init) theta = g.mul(theta, bind(prefix + ".scale"));
  return theta;
}

ParamVector direct_map_generate(const ParamSet& params, const DirectMapConfig& cfg, const LatentVector& z_current,
                                const LatentVector& z_goal) {
  Graph g;
  Binder bind(g);
  bind.attach(params, false);
  auto theta = direct_map_generate(bind, cfg, g.input("z_c", Tensor::row(z_current.values)),
                                   g.input("z_g", Tensor::row(z_goal.values)));
  return ParamVector{g.value(theta).values()};
}

}  // namespace hypergoal
