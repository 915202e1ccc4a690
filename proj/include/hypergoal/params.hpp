#pragma once

#include <cstddef>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "hypergoal/graph.hpp"

namespace hypergoal {

using Rng = std::mt19937_64;

/// Named tensors in insertion order; the order is the serialization order.
class ParamSet {
 public:
  void add(const std::string& name, Tensor value);
  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);

  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::vector<std::pair<std::string, Tensor>>& entries() { return entries_; }
  std::size_t scalar_count() const;
  bool empty() const { return entries_.empty(); }

  friend bool operator==(const ParamSet& a, const ParamSet& b) { return a.entries_ == b.entries_; }

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::map<std::string, std::size_t> index_;
};

enum class Activation { identity, tanh, relu, sigmoid };

/// Resolves parameter names to graph leaves across several ParamSets, each
/// attached as trainable or frozen.
class Binder {
 public:
  explicit Binder(Graph& graph) : graph_(&graph) {}

  void attach(const ParamSet& params, bool trainable);
  NodeId operator()(const std::string& name);
  Graph& graph() { return *graph_; }

 private:
  Graph* graph_;
  std::vector<std::pair<const ParamSet*, bool>> sets_;
};

/// Appends `prefix.w` [in,out] ~ N(0, gain^2/in) and a zero `prefix.b` [1,out].
void add_dense(ParamSet& params, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng,
               double gain = 1.0);

/// Appends layers `prefix.l0 .. prefix.l{n-1}` for the given widths.
void add_mlp(ParamSet& params, const std::string& prefix, const std::vector<std::size_t>& widths,
             Rng& rng, double gain = 1.0);

NodeId activate(Graph& graph, NodeId x, Activation act);
NodeId dense(Binder& bind, const std::string& prefix, NodeId x);
/// Dense stack with `hidden` activation between layers and `output` on the last.
NodeId mlp(Binder& bind, const std::string& prefix, std::size_t layers, NodeId x, Activation hidden,
           Activation output);

}  // namespace hypergoal
