#include "hypergoal/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <numbers>

#include "hypergoal/errors.hpp"

namespace hypergoal {

void adam_step(ParamSet& params, const GradientMap& grads, AdamState& state, double lr, const AdamConfig& cfg) {
  for (const auto& [name, g] : grads)
    if (!params.contains(name) || params.get(name).shape() != g.shape())
      throw ShapeError("adam_step: gradient '" + name + "' does not match a parameter");
  state.step += 1;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (auto& [name, value] : params.entries()) {
    auto it = grads.find(name);
    if (it == grads.end()) continue;
    const Tensor& g = it->second;
    auto [mi, fresh_m] = state.m.try_emplace(name, Tensor(value.shape()));
    auto [vi, fresh_v] = state.v.try_emplace(name, Tensor(value.shape()));
    auto m = mi->second.data();
    auto v = vi->second.data();
    auto p = value.data();
    auto gd = g.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gd[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gd[i] * gd[i];
      p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.eps);
    }
  }
}

double cosine_lr(std::size_t epoch, std::size_t total_epochs, double lr0) {
  if (epoch > total_epochs) throw std::invalid_argument("cosine_lr: epoch beyond the schedule");
  if (total_epochs == 0) return lr0;
  const double frac = static_cast<double>(epoch) / static_cast<double>(total_epochs);
  return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

double global_norm(const GradientMap& grads) {
  double acc = 0.0;
  for (const auto& [name, g] : grads)
    for (double v : g.data()) acc += v * v;
  return std::sqrt(acc);
}

double clip_global_norm(GradientMap& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& [name, g] : grads)
      for (double& v : g.data()) v *= s;
  }
  return norm;
}

}  // namespace hypergoal
