#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "hypergoal/encoder.hpp"
#include "hypergoal/hypernet.hpp"
#include "hypergoal/toyenv.hpp"

namespace hypergoal {

inline constexpr std::size_t kWindowLength = 2;

/// The last two frames, oldest first. Proprios are standardized.
struct ObsWindow {
  std::vector<LatentVector> latents;
  std::vector<Proprio> proprios;
};

ObsWindow make_window(const LatentVector& z_prev, const LatentVector& z_cur, const Proprio& s_prev,
                      const Proprio& s_cur);

/// [z_{t-1}, z_t, s_{t-1}, s_t]
std::vector<double> window_features(const ObsWindow& window);
inline std::size_t window_feature_dim(std::size_t latent_dim) { return kWindowLength * (latent_dim + kProprioDim); }

PolicyLayout default_policy_layout(std::size_t latent_dim, std::size_t hidden = 32);

struct Action {
  std::array<double, kActionDim> values{};
  Vec2 vec() const { return {values[0], values[1]}; }
};

/// Runs the target MLP with per-row parameters: theta [B, P], features
/// [B, in] -> actions [B, out]. tanh after every layer, output included.
NodeId policy_forward(Graph& graph, const PolicyLayout& layout, NodeId theta, NodeId features);
Action policy_forward(const ParamVector& theta, const PolicyLayout& layout, const ObsWindow& window);

/// Fixed-parameter baseline over [window features, z_g]: in -> h -> h -> 2.
struct GcbcConfig {
  std::size_t latent_dim = 16;
  std::size_t hidden = 64;
};

inline constexpr const char* kGcbcPrefix = "gcbc";

std::size_t gcbc_param_count(const GcbcConfig& cfg);
/// Smallest hidden width whose parameter count reaches `target`.
std::size_t matched_gcbc_hidden(std::size_t latent_dim, std::size_t target);

ParamSet init_gcbc(const GcbcConfig& cfg, Rng& rng);
NodeId gcbc_forward(Binder& bind, const GcbcConfig& cfg, NodeId features, NodeId z_goal);
Action gcbc_forward(const ParamSet& params, const GcbcConfig& cfg, const ObsWindow& window,
                    const LatentVector& z_goal);

}  // namespace hypergoal
