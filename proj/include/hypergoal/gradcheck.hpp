#pragma once

#include <map>
#include <string>

#include "hypergoal/graph.hpp"

namespace hypergoal {

struct FdReport {
  /// max over every trainable entry of |analytic - central| / max(1, |central|)
  double max_relative_error = 0.0;
  std::map<std::string, double> per_param;

  /// Worst error per parameter group, where the group is the name prefix
  /// before the first '.'.
  std::map<std::string, double> per_group() const;
};

/// Compares reverse-mode gradients of `scalar_output` against central finite
/// differences with the given step. The graph is copied; the caller's graph
/// is left untouched.
FdReport fd_check(const Graph& graph, NodeId scalar_output, double step = 1e-5);

}  // namespace hypergoal
