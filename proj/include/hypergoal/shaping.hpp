#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hypergoal/encoder.hpp"
#include "hypergoal/toyenv.hpp"

namespace hypergoal {

enum class DistReference { goal, start };

DistReference parse_dist_reference(const std::string& text);
std::string to_string(DistReference reference);

struct ShapingConfig {
  double beta = 0.0;
  double lambda_pred = 1.0;
  double lambda_dist = 1.0;
  Metric metric = Metric::euclidean;
  DistReference reference = DistReference::goal;
  bool detach_reference = false;
};

void validate(const ShapingConfig& cfg);

/// Forward model [z; a] -> hidden -> z', tanh hidden, linear output.
struct DynamicsConfig {
  std::size_t latent_dim = 16;
  std::size_t hidden = 64;
};

inline constexpr const char* kDynamicsPrefix = "dynamics";

ParamSet init_dynamics(const DynamicsConfig& cfg, Rng& rng);
/// z [B, d_z], actions [B, 2] -> predicted next latents [B, d_z]
NodeId dynamics_forward(Binder& bind, const DynamicsConfig& cfg, NodeId z, NodeId actions);
LatentVector dynamics_forward(const ParamSet& params, const DynamicsConfig& cfg, const LatentVector& z, Vec2 action);

/// Mean over batch and latent dims of (Phi(z_t, a_t) - z_{t+1})^2.
NodeId pred_loss(Binder& bind, const DynamicsConfig& cfg, NodeId z_t, NodeId actions, NodeId z_next);
/// Same loss, encoding the image batches [B, pixels] first.
NodeId pred_loss(Binder& bind, const EncoderConfig& enc, const DynamicsConfig& cfg, NodeId images_t, NodeId actions,
                 NodeId images_next);

/// sum_j max(0, beta + d(z_{j+1}, ref) - d(z_j, ref)) over the rows of
/// `latents` [N, d_z]; ref is [1, d_z].
NodeId dist_loss(Graph& graph, NodeId latents, NodeId ref, const ShapingConfig& cfg);
double dist_loss(std::span<const LatentVector> latents, const LatentVector& ref, const ShapingConfig& cfg);
/// The hinge sum over a precomputed distance sequence.
double dist_loss_from_distances(std::span<const double> distances, double beta);

}  // namespace hypergoal
