#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hypergoal/params.hpp"

namespace hypergoal {

struct LatentVector {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  friend bool operator==(const LatentVector&, const LatentVector&) = default;
};

/// Fully connected image encoder: flattened image -> hidden -> hidden -> latent,
/// tanh on the hidden layers, linear output. Parameters live under `encoder.`.
struct EncoderConfig {
  std::size_t input_dim = 576;
  std::size_t hidden = 64;
  std::size_t latent_dim = 16;
};

inline constexpr const char* kEncoderPrefix = "encoder";

ParamSet init_encoder(const EncoderConfig& cfg, Rng& rng);

/// images: [B, input_dim] -> latents [B, latent_dim]
NodeId encode(Binder& bind, const EncoderConfig& cfg, NodeId images);
LatentVector encode(const ParamSet& params, const EncoderConfig& cfg, const Tensor& image);
/// Encodes several images in one pass; row i of the result is image i.
Tensor encode_batch(const ParamSet& params, const EncoderConfig& cfg, std::span<const Tensor* const> images);

enum class Metric { euclidean, cosine };

Metric parse_metric(const std::string& text);
std::string to_string(Metric metric);

/// euclidean: ||a-b||; cosine: 1 - a.b / (||a|| ||b||). Cosine rejects zero vectors.
double latent_distance(std::span<const double> a, std::span<const double> b, Metric metric);
inline double latent_distance(const LatentVector& a, const LatentVector& b, Metric metric) {
  return latent_distance(a.values, b.values, metric);
}

/// Row-wise distance from each row of `points` [N,d] to `ref` ([1,d] or [N,d]); result [N,1].
NodeId latent_distance(Graph& graph, NodeId points, NodeId ref, Metric metric);

}  // namespace hypergoal
