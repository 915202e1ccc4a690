#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "hypergoal/params.hpp"

namespace hypergoal {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
  std::uint64_t step = 0;

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// One bias-corrected Adam update of every parameter that has an entry in
/// `grads`; parameters without a gradient are left untouched.
void adam_step(ParamSet& params, const GradientMap& grads, AdamState& state, double lr, const AdamConfig& cfg = {});

/// lr0 * 0.5 * (1 + cos(pi * epoch / total))
double cosine_lr(std::size_t epoch, std::size_t total_epochs, double lr0);

double global_norm(const GradientMap& grads);
/// Rescales all gradients so their joint L2 norm is at most max_norm. Returns the norm before clipping.
double clip_global_norm(GradientMap& grads, double max_norm);

}  // namespace hypergoal
