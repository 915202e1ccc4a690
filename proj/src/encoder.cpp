#include "hypergoal/encoder.hpp"

#include <cmath>

#include "hypergoal/errors.hpp"

namespace hypergoal {

ParamSet init_encoder(const EncoderConfig& cfg, Rng& rng) {
  ParamSet p;
  add_mlp(p, kEncoderPrefix, {cfg.input_dim, cfg.hidden, cfg.hidden, cfg.latent_dim}, rng);
  return p;
}

NodeId encode(Binder& bind, const EncoderConfig& cfg, NodeId images) {
  if (bind.graph().value(images).cols() != cfg.input_dim)
    throw ShapeError("encode: image width " + std::to_string(bind.graph().value(images).cols()) +
                     " != " + std::to_string(cfg.input_dim));
  return mlp(bind, kEncoderPrefix, 3, images, Activation::tanh, Activation::identity);
}

Tensor encode_batch(const ParamSet& params, const EncoderConfig& cfg, std::span<const Tensor* const> images) {
  if (images.empty()) throw ShapeError("encode_batch: no images");
  Tensor stacked = Tensor::zeros(images.size(), cfg.input_dim);
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i]->size() != cfg.input_dim)
      throw ShapeError("encode: image has " + std::to_string(images[i]->size()) + " pixels, expected " +
                       std::to_string(cfg.input_dim));
    std::copy(images[i]->data().begin(), images[i]->data().end(), stacked.data().begin() + i * cfg.input_dim);
  }
  Graph g;
  Binder bind(g);
  bind.attach(params, false);
  return g.value(encode(bind, cfg, g.input("images", std::move(stacked))));
}

LatentVector encode(const ParamSet& params, const EncoderConfig& cfg, const Tensor& image) {
  const Tensor* one[] = {&image};
  return LatentVector{encode_batch(params, cfg, one).values()};
}

Metric parse_metric(const std::string& text) {
  if (text == "euclidean") return Metric::euclidean;
  if (text == "cosine") return Metric::cosine;
  throw ConfigError("unknown metric '" + text + "' (expected euclidean or cosine)");
}

std::string to_string(Metric metric) { return metric == Metric::euclidean ? "euclidean" : "cosine"; }

double latent_distance(std::span<const double> a, std::span<const double> b, Metric metric) {
  if (a.size() != b.size()) throw ShapeError("latent_distance: dimension mismatch");
  if (metric == Metric::euclidean) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(acc);
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw std::invalid_argument("cosine distance of a zero vector");
  return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
}

NodeId latent_distance(Graph& g, NodeId points, NodeId ref, Metric metric) {
  if (g.value(points).cols() != g.value(ref).cols()) throw ShapeError("latent_distance: dimension mismatch");
  if (metric == Metric::euclidean) return g.row_norm(g.sub(points, ref));
  auto dot = g.row_sum(g.mul(points, ref));
  auto denom = g.mul(g.row_norm(points), g.row_norm(ref));
  return g.sub(g.constant(Tensor::filled(g.value(points).rows(), 1, 1.0)), g.div(dot, denom));
}

}  // namespace hypergoal
