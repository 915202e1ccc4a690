#include "hypergoal/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "hypergoal/errors.hpp"

namespace hypergoal {

std::map<std::string, double> FdReport::per_group() const {
  std::map<std::string, double> groups;
  for (const auto& [name, err] : per_param) {
    const std::string group = name.substr(0, name.find('.'));
    groups[group] = std::max(groups[group], err);
  }
  return groups;
}

FdReport fd_check(const Graph& graph, NodeId scalar_output, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("fd_check: step must be positive");
  Graph probe = graph;
  const GradientMap analytic = probe.backward(scalar_output);

  FdReport report;
  for (const auto& [name, grad] : analytic) {
    Tensor base = probe.leaf_value(name);
    double worst = 0.0;
    for (std::size_t i = 0; i < base.size(); ++i) {
      Tensor shifted = base;
      shifted[i] = base[i] + step;
      probe.forward({{name, shifted}});
      const double up = probe.scalar(scalar_output);
      shifted[i] = base[i] - step;
      probe.forward({{name, shifted}});
      const double down = probe.scalar(scalar_output);
      if (!std::isfinite(up) || !std::isfinite(down))
        throw NonFiniteError("fd_check: non-finite probe value for " + name);
      const double central = (up - down) / (2.0 * step);
      const double err = std::abs(grad[i] - central) / std::max(1.0, std::abs(central));
      worst = std::max(worst, err);
    }
    probe.forward({{name, base}});
    report.per_param[name] = worst;
    report.max_relative_error = std::max(report.max_relative_error, worst);
  }
  return report;
}

}  // namespace hypergoal
