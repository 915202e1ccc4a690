#include "hypergoal/shaping.hpp"

#include <algorithm>

#include "hypergoal/errors.hpp"

namespace hypergoal {

DistReference parse_dist_reference(const std::string& text) {
  if (text == "goal") return DistReference::goal;
  if (text == "start") return DistReference::start;
  throw ConfigError("unknown distance reference '" + text + "' (expected goal or start)");
}

std::string to_string(DistReference reference) { return reference == DistReference::goal ? "goal" : "start"; }

void validate(const ShapingConfig& cfg) {
  if (!(cfg.beta >= 0.0)) throw ConfigError("shaping.beta must be >= 0");
  if (!(cfg.lambda_pred >= 0.0) || !(cfg.lambda_dist >= 0.0)) throw ConfigError("shaping weights must be >= 0");
}

ParamSet init_dynamics(const DynamicsConfig& cfg, Rng& rng) {
  ParamSet p;
  add_mlp(p, kDynamicsPrefix, {cfg.latent_dim + kActionDim, cfg.hidden, cfg.latent_dim}, rng);
  return p;
}

NodeId dynamics_forward(Binder& bind, const DynamicsConfig& cfg, NodeId z, NodeId actions) {
  Graph& g = bind.graph();
  if (g.value(z).cols() != cfg.latent_dim || g.value(actions).cols() != kActionDim ||
      g.value(z).rows() != g.value(actions).rows())
    throw ShapeError("dynamics_forward: z " + shape_string(g.value(z).shape()) + ", actions " +
                     shape_string(g.value(actions).shape()));
  return mlp(bind, kDynamicsPrefix, 2, g.concat_cols({z, actions}), Activation::tanh, Activation::identity);
}

LatentVector dynamics_forward(const ParamSet& params, const DynamicsConfig& cfg, const LatentVector& z, Vec2 action) {
  Graph g;
  Binder bind(g);
  bind.attach(params, false);
  auto out = dynamics_forward(bind, cfg, g.input("z", Tensor::row(z.values)),
                              g.input("a", Tensor::row({action.x, action.y})));
  return LatentVector{g.value(out).values()};
}

NodeId pred_loss(Binder& bind, const DynamicsConfig& cfg, NodeId z_t, NodeId actions, NodeId z_next) {
  Graph& g = bind.graph();
  if (g.value(z_t).rows() == 0) throw ShapeError("pred_loss: empty batch");
  if (g.value(z_next).shape() != g.value(z_t).shape()) throw ShapeError("pred_loss: z_t and z_next differ in shape");
  return g.mean(g.square(g.sub(dynamics_forward(bind, cfg, z_t, actions), z_next)));
}

NodeId pred_loss(Binder& bind, const EncoderConfig& enc, const DynamicsConfig& cfg, NodeId images_t, NodeId actions,
                 NodeId images_next) {
  return pred_loss(bind, cfg, encode(bind, enc, images_t), actions, encode(bind, enc, images_next));
}

NodeId dist_loss(Graph& g, NodeId latents, NodeId ref, const ShapingConfig& cfg) {
  const std::size_t n = g.value(latents).rows();
  if (n < 2) throw ShapeError("dist_loss needs at least two latents, got " + std::to_string(n));
  if (g.value(ref).rows() != 1) throw ShapeError("dist_loss: reference must be a single row");
  if (cfg.detach_reference) ref = g.stop_gradient(ref);
  auto d = latent_distance(g, latents, ref, cfg.metric);
  auto rise = g.sub(g.slice_rows(d, 1, n), g.slice_rows(d, 0, n - 1));
  return g.sum(g.hinge(g.add_scalar(rise, cfg.beta)));
}

double dist_loss_from_distances(std::span<const double> d, double beta) {
  if (d.size() < 2) throw ShapeError("dist_loss needs at least two distances");
  double total = 0.0;
  for (std::size_t j = 0; j + 1 < d.size(); ++j) total += std::max(0.0, beta + d[j + 1] - d[j]);
  return total;
}

double dist_loss(std::span<const LatentVector> latents, const LatentVector& ref, const ShapingConfig& cfg) {
  std::vector<double> d;
  for (const auto& z : latents) d.push_back(latent_distance(z, ref, cfg.metric));
  return dist_loss_from_distances(d, cfg.beta);
}

}  // namespace hypergoal
