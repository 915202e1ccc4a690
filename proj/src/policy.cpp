#include "hypergoal/policy.hpp"

#include "hypergoal/errors.hpp"

namespace hypergoal {
namespace {

Action to_action(const Tensor& t) {
  if (t.size() != kActionDim) throw ShapeError("policy output has " + std::to_string(t.size()) + " entries");
  return Action{{t[0], t[1]}};
}

}  // namespace

ObsWindow make_window(const LatentVector& z_prev, const LatentVector& z_cur, const Proprio& s_prev,
                      const Proprio& s_cur) {
  return ObsWindow{{z_prev, z_cur}, {s_prev, s_cur}};
}

std::vector<double> window_features(const ObsWindow& w) {
  if (w.latents.size() != kWindowLength || w.proprios.size() != kWindowLength)
    throw ShapeError("observation window must hold exactly " + std::to_string(kWindowLength) + " frames");
  if (w.latents[0].size() != w.latents[1].size()) throw ShapeError("window latents differ in size");
  std::vector<double> f;
  for (const auto& z : w.latents) f.insert(f.end(), z.values.begin(), z.values.end());
  for (const auto& s : w.proprios) f.insert(f.end(), s.begin(), s.end());
  return f;
}

PolicyLayout default_policy_layout(std::size_t latent_dim, std::size_t hidden) {
  return PolicyLayout({window_feature_dim(latent_dim), hidden, hidden, kActionDim});
}

NodeId policy_forward(Graph& g, const PolicyLayout& layout, NodeId theta, NodeId features) {
  const Tensor& t = g.value(theta);
  const Tensor& x = g.value(features);
  if (t.cols() != layout.param_count() || x.cols() != layout.input_dim() || t.rows() != x.rows())
    throw ShapeError("policy_forward: theta " + shape_string(t.shape()) + ", features " + shape_string(x.shape()) +
                     " do not fit layout with " + std::to_string(layout.param_count()) + " parameters");
  NodeId h = features;
  for (const auto& layer : layout.layers()) {
    auto w = g.slice_cols(theta, layer.weight_offset, layer.bias_offset);
    auto b = g.slice_cols(theta, layer.bias_offset, layer.end);
    h = g.tanh(g.add(g.row_matvec(h, w, layer.out), b));
  }
  return h;
}

Action policy_forward(const ParamVector& theta, const PolicyLayout& layout, const ObsWindow& window) {
  Graph g;
  auto out = policy_forward(g, layout, g.input("theta", Tensor::row(theta.values)),
                            g.input("features", Tensor::row(window_features(window))));
  return to_action(g.value(out));
}

std::size_t gcbc_param_count(const GcbcConfig& cfg) {
  const std::size_t in = window_feature_dim(cfg.latent_dim) + cfg.latent_dim;
  const std::size_t h = cfg.hidden;
  return in * h + h + h * h + h + h * kActionDim + kActionDim;
}

std::size_t matched_gcbc_hidden(std::size_t latent_dim, std::size_t target) {
  GcbcConfig cfg{latent_dim, 1};
  while (gcbc_param_count(cfg) < target) ++cfg.hidden;
  return cfg.hidden;
}

ParamSet init_gcbc(const GcbcConfig& cfg, Rng& rng) {
  ParamSet p;
  add_mlp(p, kGcbcPrefix, {window_feature_dim(cfg.latent_dim) + cfg.latent_dim, cfg.hidden, cfg.hidden, kActionDim},
          rng);
  return p;
}

NodeId gcbc_forward(Binder& bind, const GcbcConfig& cfg, NodeId features, NodeId z_goal) {
  Graph& g = bind.graph();
  if (g.value(features).cols() != window_feature_dim(cfg.latent_dim) || g.value(z_goal).cols() != cfg.latent_dim)
    throw ShapeError("gcbc_forward: input widths do not match latent_dim " + std::to_string(cfg.latent_dim));
  return mlp(bind, kGcbcPrefix, 3, g.concat_cols({features, z_goal}), Activation::tanh, Activation::tanh);
}

Action gcbc_forward(const ParamSet& params, const GcbcConfig& cfg, const ObsWindow& window,
                    const LatentVector& z_goal) {
  Graph g;
  Binder bind(g);
  bind.attach(params, false);
  auto out = gcbc_forward(bind, cfg, g.input("features", Tensor::row(window_features(window))),
                          g.input("goal", Tensor::row(z_goal.values)));
  return to_action(g.value(out));
}

}  // namespace hypergoal
