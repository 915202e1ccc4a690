#include "hypergoal/params.hpp"

#include <cmath>

#include "hypergoal/errors.hpp"

namespace hypergoal {

void ParamSet::add(const std::string& name, Tensor value) {
  if (index_.count(name)) throw ShapeError("duplicate parameter: " + name);
  index_[name] = entries_.size();
  entries_.emplace_back(name, std::move(value));
}

const Tensor& ParamSet::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ShapeError("missing parameter: " + name);
  return entries_[it->second].second;
}

Tensor& ParamSet::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ShapeError("missing parameter: " + name);
  return entries_[it->second].second;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.size();
  return n;
}

void Binder::attach(const ParamSet& params, bool trainable) { sets_.emplace_back(&params, trainable); }

NodeId Binder::operator()(const std::string& name) {
  for (const auto& [set, trainable] : sets_)
    if (set->contains(name)) return graph_->param(name, set->get(name), trainable);
  throw ShapeError("no attached parameter named " + name);
}

void add_dense(ParamSet& params, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng,
               double gain) {
  std::normal_distribution<double> normal(0.0, gain / std::sqrt(static_cast<double>(in)));
  Tensor w = Tensor::zeros(in, out);
  for (auto& v : w.data()) v = normal(rng);
  params.add(prefix + ".w", std::move(w));
  params.add(prefix + ".b", Tensor::zeros(1, out));
}

void add_mlp(ParamSet& params, const std::string& prefix, const std::vector<std::size_t>& widths,
             Rng& rng, double gain) {
  for (std::size_t i = 0; i + 1 < widths.size(); ++i)
    add_dense(params, prefix + ".l" + std::to_string(i), widths[i], widths[i + 1], rng, gain);
}

NodeId activate(Graph& graph, NodeId x, Activation act) {
  switch (act) {
    case Activation::identity: return x;
    case Activation::tanh: return graph.tanh(x);
    case Activation::relu: return graph.relu(x);
    case Activation::sigmoid: return graph.sigmoid(x);
  }
  return x;
}

NodeId dense(Binder& bind, const std::string& prefix, NodeId x) {
  Graph& g = bind.graph();
  return g.affine(x, bind(prefix + ".w"), bind(prefix + ".b"));
}

NodeId mlp(Binder& bind, const std::string& prefix, std::size_t layers, NodeId x, Activation hidden,
           Activation output) {
  for (std::size_t i = 0; i < layers; ++i) {
    x = dense(bind, prefix + ".l" + std::to_string(i), x);
    x = activate(bind.graph(), x, i + 1 == layers ? output : hidden);
  }
  return x;
}

}  // namespace hypergoal
