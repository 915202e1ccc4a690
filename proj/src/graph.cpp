#include "hypergoal/graph.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "hypergoal/errors.hpp"

namespace hypergoal {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMatrix = Eigen::Map<RowMatrix>;
using ConstMapMatrix = Eigen::Map<const RowMatrix>;

ConstMapMatrix view(const Tensor& t) {
  return ConstMapMatrix(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                        static_cast<Eigen::Index>(t.cols()));
}

MapMatrix view(Tensor& t) {
  return MapMatrix(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                   static_cast<Eigen::Index>(t.cols()));
}

Tensor as_matrix(Tensor t) {
  if (t.rank() == 2) return t;
  if (t.rank() == 1) return t.reshaped({1, t.size()});
  std::size_t rows = t.rows();
  std::size_t cols = t.cols();
  return t.reshaped({rows, cols});
}

bool broadcastable(const Tensor& a, const Tensor& b) {
  return (b.rows() == a.rows() || b.rows() == 1) && (b.cols() == a.cols() || b.cols() == 1);
}

// Sums `grad` (shaped like the broadcast result) down to `target` shape.
Tensor reduce_to(const Tensor& grad, const Tensor& target) {
  if (grad.shape() == target.shape()) return grad;
  Tensor out(target.shape());
  const std::size_t rows = grad.rows(), cols = grad.cols();
  const std::size_t tr = target.rows(), tc = target.cols();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      out[(tr == 1 ? 0 : r) * tc + (tc == 1 ? 0 : c)] += grad[r * cols + c];
  return out;
}

template <typename F>
Tensor broadcast_apply(const Tensor& a, const Tensor& b, F f) {
  Tensor out(a.shape());
  const std::size_t rows = a.rows(), cols = a.cols();
  const std::size_t br = b.rows(), bc = b.cols();
  if (b.shape() == a.shape()) {
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
    return out;
  }
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      out[r * cols + c] = f(a[r * cols + c], b[(br == 1 ? 0 : r) * bc + (bc == 1 ? 0 : c)]);
  return out;
}

template <typename F>
Tensor map_values(const Tensor& a, F f) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

void accumulate(Tensor& slot, Tensor delta) {
  if (slot.size() == 0) {
    slot = std::move(delta);
    return;
  }
  for (std::size_t i = 0; i < slot.size(); ++i) slot[i] += delta[i];
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::input: return "input";
    case Op::param: return "param";
    case Op::constant: return "constant";
    case Op::matmul: return "matmul";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::div: return "div";
    case Op::scale: return "scale";
    case Op::add_scalar: return "add_scalar";
    case Op::concat_cols: return "concat_cols";
    case Op::slice_cols: return "slice_cols";
    case Op::slice_rows: return "slice_rows";
    case Op::gather_rows: return "gather_rows";
    case Op::row_matvec: return "row_matvec";
    case Op::tanh: return "tanh";
    case Op::relu: return "relu";
    case Op::sigmoid: return "sigmoid";
    case Op::hinge: return "hinge";
    case Op::square: return "square";
    case Op::sqrt: return "sqrt";
    case Op::sum: return "sum";
    case Op::mean: return "mean";
    case Op::row_sum: return "row_sum";
    case Op::row_norm: return "row_norm";
    case Op::norm: return "norm";
    case Op::stop_gradient: return "stop_gradient";
    case Op::affine: return "affine";
    case Op::segment_moments: return "segment_moments";
    case Op::segment_axpy: return "segment_axpy";
  }
  return "?";
}

NodeId Graph::push(Node node) {
  nodes_.push_back(std::move(node));
  const std::size_t index = nodes_.size() - 1;
  Node& n = nodes_.back();
  if (n.op != Op::param && n.op != Op::stop_gradient)
    for (auto in : n.inputs) n.requires_grad = n.requires_grad || nodes_[in].requires_grad;
  try {
    evaluate(index);
  } catch (...) {
    nodes_.pop_back();
    throw;
  }
  return NodeId{index};
}

NodeId Graph::input(const std::string& name, Tensor value) {
  if (leaves_.count(name)) throw ShapeError("duplicate graph leaf name: " + name);
  Node n;
  n.op = Op::input;
  n.name = name;
  n.value = as_matrix(std::move(value));
  auto id = push(std::move(n));
  leaves_[name] = id.index;
  return id;
}

NodeId Graph::param(const std::string& name, const Tensor& value, bool trainable) {
  if (auto it = leaves_.find(name); it != leaves_.end()) {
    const Node& existing = nodes_[it->second];
    if (existing.op != Op::param || existing.trainable != trainable)
      throw ShapeError("graph leaf '" + name + "' rebound with a different role");
    return NodeId{it->second};
  }
  Node n;
  n.op = Op::param;
  n.name = name;
  n.value = as_matrix(value);
  n.trainable = trainable;
  n.requires_grad = trainable;
  auto id = push(std::move(n));
  leaves_[name] = id.index;
  return id;
}

NodeId Graph::constant(Tensor value) {
  Node n;
  n.op = Op::constant;
  n.value = as_matrix(std::move(value));
  return push(std::move(n));
}

NodeId Graph::unary(Op op, NodeId a) {
  Node n;
  n.op = op;
  n.inputs = {a.index};
  return push(std::move(n));
}

NodeId Graph::binary(Op op, NodeId a, NodeId b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  if (op != Op::matmul && !broadcastable(va, vb))
    throw ShapeError(std::string(op_name(op)) + ": cannot broadcast " + shape_string(vb.shape()) +
                     " onto " + shape_string(va.shape()));
  if (op == Op::matmul && va.cols() != vb.rows())
    throw ShapeError("matmul: " + shape_string(va.shape()) + " x " + shape_string(vb.shape()));
  Node n;
  n.op = op;
  n.inputs = {a.index, b.index};
  return push(std::move(n));
}

NodeId Graph::matmul(NodeId a, NodeId b) { return binary(Op::matmul, a, b); }
NodeId Graph::add(NodeId a, NodeId b) { return binary(Op::add, a, b); }
NodeId Graph::sub(NodeId a, NodeId b) { return binary(Op::sub, a, b); }
NodeId Graph::mul(NodeId a, NodeId b) { return binary(Op::mul, a, b); }
NodeId Graph::div(NodeId a, NodeId b) { return binary(Op::div, a, b); }

NodeId Graph::scale(NodeId a, double factor) {
  Node n;
  n.op = Op::scale;
  n.inputs = {a.index};
  n.attr = factor;
  return push(std::move(n));
}

NodeId Graph::add_scalar(NodeId a, double offset) {
  Node n;
  n.op = Op::add_scalar;
  n.inputs = {a.index};
  n.attr = offset;
  return push(std::move(n));
}

NodeId Graph::concat_cols(const std::vector<NodeId>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t rows = value(parts.front()).rows();
  Node n;
  n.op = Op::concat_cols;
  for (auto p : parts) {
    if (value(p).rows() != rows)
      throw ShapeError("concat_cols: row mismatch " + shape_string(value(p).shape()));
    n.inputs.push_back(p.index);
  }
  return push(std::move(n));
}

NodeId Graph::slice_cols(NodeId a, std::size_t begin, std::size_t end) {
  if (begin >= end || end > value(a).cols())
    throw ShapeError("slice_cols: bad range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") of " + shape_string(value(a).shape()));
  Node n;
  n.op = Op::slice_cols;
  n.inputs = {a.index};
  n.begin = begin;
  n.end = end;
  return push(std::move(n));
}

NodeId Graph::slice_rows(NodeId a, std::size_t begin, std::size_t end) {
  if (begin >= end || end > value(a).rows())
    throw ShapeError("slice_rows: bad range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") of " + shape_string(value(a).shape()));
  Node n;
  n.op = Op::slice_rows;
  n.inputs = {a.index};
  n.begin = begin;
  n.end = end;
  return push(std::move(n));
}

NodeId Graph::gather_rows(NodeId a, std::vector<std::size_t> rows) {
  if (rows.empty()) throw ShapeError("gather_rows: empty index list");
  for (auto r : rows)
    if (r >= value(a).rows()) throw ShapeError("gather_rows: row index out of range");
  Node n;
  n.op = Op::gather_rows;
  n.inputs = {a.index};
  n.rows = std::move(rows);
  return push(std::move(n));
}

NodeId Graph::row_matvec(NodeId x, NodeId weights, std::size_t out) {
  const Tensor& vx = value(x);
  const Tensor& vw = value(weights);
  if (out == 0 || vx.rows() != vw.rows() || vw.cols() != vx.cols() * out)
    throw ShapeError("row_matvec: x " + shape_string(vx.shape()) + " weights " +
                     shape_string(vw.shape()) + " out " + std::to_string(out));
  Node n;
  n.op = Op::row_matvec;
  n.inputs = {x.index, weights.index};
  n.end = out;
  return push(std::move(n));
}

NodeId Graph::tanh(NodeId a) { return unary(Op::tanh, a); }
NodeId Graph::relu(NodeId a) { return unary(Op::relu, a); }
NodeId Graph::sigmoid(NodeId a) { return unary(Op::sigmoid, a); }
NodeId Graph::hinge(NodeId a) { return unary(Op::hinge, a); }
NodeId Graph::square(NodeId a) { return unary(Op::square, a); }
NodeId Graph::sqrt(NodeId a) { return unary(Op::sqrt, a); }
NodeId Graph::sum(NodeId a) { return unary(Op::sum, a); }
NodeId Graph::mean(NodeId a) { return unary(Op::mean, a); }
NodeId Graph::row_sum(NodeId a) { return unary(Op::row_sum, a); }
NodeId Graph::row_norm(NodeId a) { return unary(Op::row_norm, a); }
NodeId Graph::norm(NodeId a) { return unary(Op::norm, a); }
NodeId Graph::stop_gradient(NodeId a) { return unary(Op::stop_gradient, a); }

namespace {

void check_segments(const std::vector<std::size_t>& ends, std::size_t cols, const char* op) {
  if (ends.empty() || ends.back() != cols)
    throw ShapeError(std::string(op) + ": segments must end at column " + std::to_string(cols));
  std::size_t prev = 0;
  for (auto e : ends) {
    if (e <= prev) throw ShapeError(std::string(op) + ": segment ends must be strictly increasing");
    prev = e;
  }
}

}  // namespace

NodeId Graph::affine(NodeId x, NodeId w, NodeId b) {
  const Tensor& vx = value(x);
  const Tensor& vw = value(w);
  const Tensor& vb = value(b);
  if (vx.cols() != vw.rows() || vb.rows() != 1 || vb.cols() != vw.cols())
    throw ShapeError("affine: " + shape_string(vx.shape()) + " x " + shape_string(vw.shape()) + " + " +
                     shape_string(vb.shape()));
  Node n;
  n.op = Op::affine;
  n.inputs = {x.index, w.index, b.index};
  return push(std::move(n));
}

NodeId Graph::segment_moments(NodeId x, std::vector<std::size_t> ends, double eps) {
  check_segments(ends, value(x).cols(), "segment_moments");
  if (!(eps > 0.0)) throw ShapeError("segment_moments: eps must be positive");
  Node n;
  n.op = Op::segment_moments;
  n.inputs = {x.index};
  n.rows = std::move(ends);
  n.attr = eps;
  return push(std::move(n));
}

NodeId Graph::segment_axpy(NodeId x, NodeId s, NodeId u, std::vector<std::size_t> ends) {
  const Tensor& vx = value(x);
  check_segments(ends, vx.cols(), "segment_axpy");
  if (value(u).shape() != vx.shape() || value(s).rows() != vx.rows() || value(s).cols() != ends.size())
    throw ShapeError("segment_axpy: x " + shape_string(vx.shape()) + ", s " + shape_string(value(s).shape()) +
                     ", u " + shape_string(value(u).shape()));
  Node n;
  n.op = Op::segment_axpy;
  n.inputs = {x.index, s.index, u.index};
  n.rows = std::move(ends);
  return push(std::move(n));
}

void Graph::mark_output(const std::string& name, NodeId node) { outputs_[name] = node.index; }

double Graph::scalar(NodeId node) const {
  const Tensor& v = value(node);
  if (v.size() != 1) throw ShapeError("scalar(): node has shape " + shape_string(v.shape()));
  return v[0];
}

std::vector<std::string> Graph::parameter_names() const {
  std::vector<std::string> names;
  for (const auto& [name, index] : leaves_)
    if (nodes_[index].op == Op::param && nodes_[index].trainable) names.push_back(name);
  return names;
}

const Tensor& Graph::leaf_value(const std::string& name) const {
  auto it = leaves_.find(name);
  if (it == leaves_.end()) throw ShapeError("unknown graph leaf: " + name);
  return nodes_[it->second].value;
}

void Graph::evaluate(std::size_t index) {
  Node& n = nodes_[index];
  auto in = [&](std::size_t k) -> const Tensor& { return nodes_[n.inputs[k]].value; };
  switch (n.op) {
    case Op::input:
    case Op::param:
    case Op::constant:
      break;
    case Op::matmul: {
      Tensor out = Tensor::zeros(in(0).rows(), in(1).cols());
      view(out).noalias() = view(in(0)) * view(in(1));
      n.value = std::move(out);
      break;
    }
    case Op::add:
      n.value = broadcast_apply(in(0), in(1), [](double x, double y) { return x + y; });
      break;
    case Op::sub:
      n.value = broadcast_apply(in(0), in(1), [](double x, double y) { return x - y; });
      break;
    case Op::mul:
      n.value = broadcast_apply(in(0), in(1), [](double x, double y) { return x * y; });
      break;
    case Op::div:
      n.value = broadcast_apply(in(0), in(1), [](double x, double y) { return x / y; });
      break;
    case Op::scale: {
      const double f = n.attr;
      n.value = map_values(in(0), [f](double x) { return f * x; });
      break;
    }
    case Op::add_scalar: {
      const double c = n.attr;
      n.value = map_values(in(0), [c](double x) { return x + c; });
      break;
    }
    case Op::concat_cols: {
      const std::size_t rows = in(0).rows();
      std::size_t cols = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) cols += in(k).cols();
      Tensor out = Tensor::zeros(rows, cols);
      std::size_t offset = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        const Tensor& part = in(k);
        for (std::size_t r = 0; r < rows; ++r)
          std::copy_n(part.data().begin() + r * part.cols(), part.cols(),
                      out.data().begin() + r * cols + offset);
        offset += part.cols();
      }
      n.value = std::move(out);
      break;
    }
    case Op::slice_cols: {
      const Tensor& a = in(0);
      const std::size_t width = n.end - n.begin;
      Tensor out = Tensor::zeros(a.rows(), width);
      for (std::size_t r = 0; r < a.rows(); ++r)
        std::copy_n(a.data().begin() + r * a.cols() + n.begin, width,
                    out.data().begin() + r * width);
      n.value = std::move(out);
      break;
    }
    case Op::slice_rows: {
      const Tensor& a = in(0);
      Tensor out = Tensor::zeros(n.end - n.begin, a.cols());
      std::copy(a.data().begin() + n.begin * a.cols(), a.data().begin() + n.end * a.cols(),
                out.data().begin());
      n.value = std::move(out);
      break;
    }
    case Op::gather_rows: {
      const Tensor& a = in(0);
      Tensor out = Tensor::zeros(n.rows.size(), a.cols());
      for (std::size_t r = 0; r < n.rows.size(); ++r)
        std::copy_n(a.data().begin() + n.rows[r] * a.cols(), a.cols(),
                    out.data().begin() + r * a.cols());
      n.value = std::move(out);
      break;
    }
    case Op::row_matvec: {
      const Tensor& x = in(0);
      const Tensor& w = in(1);
      const std::size_t rows = x.rows(), width = x.cols(), out_dim = n.end;
      Tensor out = Tensor::zeros(rows, out_dim);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.data().data() + r * width;
        const double* wr = w.data().data() + r * width * out_dim;
        double* yr = out.data().data() + r * out_dim;
        for (std::size_t i = 0; i < width; ++i) {
          const double xi = xr[i];
          const double* wrow = wr + i * out_dim;
          for (std::size_t j = 0; j < out_dim; ++j) yr[j] += xi * wrow[j];
        }
      }
      n.value = std::move(out);
      break;
    }
    case Op::tanh:
      n.value = map_values(in(0), [](double x) { return std::tanh(x); });
      break;
    case Op::relu:
    case Op::hinge:
      n.value = map_values(in(0), [](double x) { return x > 0.0 ? x : 0.0; });
      break;
    case Op::sigmoid:
      n.value = map_values(in(0), [](double x) {
        return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
      });
      break;
    case Op::square:
      n.value = map_values(in(0), [](double x) { return x * x; });
      break;
    case Op::sqrt:
      for (double v : in(0).data())
        if (v < 0.0) throw NonFiniteError("sqrt of negative value at node " + std::to_string(index), index);
      n.value = map_values(in(0), [](double x) { return std::sqrt(x); });
      break;
    case Op::sum:
    case Op::mean: {
      double total = 0.0;
      for (double v : in(0).data()) total += v;
      if (n.op == Op::mean) total /= static_cast<double>(in(0).size());
      n.value = Tensor::scalar(total);
      break;
    }
    case Op::row_sum:
    case Op::row_norm: {
      const Tensor& a = in(0);
      Tensor out = Tensor::zeros(a.rows(), 1);
      for (std::size_t r = 0; r < a.rows(); ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < a.cols(); ++c) {
          const double v = a[r * a.cols() + c];
          acc += n.op == Op::row_sum ? v : v * v;
        }
        out[r] = n.op == Op::row_sum ? acc : std::sqrt(acc);
      }
      n.value = std::move(out);
      break;
    }
    case Op::norm: {
      double acc = 0.0;
      for (double v : in(0).data()) acc += v * v;
      n.value = Tensor::scalar(std::sqrt(acc));
      break;
    }
    case Op::stop_gradient:
      n.value = in(0);
      break;
    case Op::affine: {
      const Tensor& x = in(0);
      const Tensor& b = in(2);
      Tensor out = Tensor::zeros(x.rows(), b.cols());
      view(out).noalias() = view(x) * view(in(1));
      view(out).rowwise() += view(b).row(0);
      n.value = std::move(out);
      break;
    }
    case Op::segment_moments: {
      const Tensor& x = in(0);
      const std::size_t segs = n.rows.size(), cols = x.cols();
      Tensor out = Tensor::zeros(x.rows(), 2 * segs);
      for (std::size_t r = 0; r < x.rows(); ++r) {
        const double* xr = x.data().data() + r * cols;
        std::size_t begin = 0;
        for (std::size_t l = 0; l < segs; ++l) {
          const std::size_t end = n.rows[l];
          const double count = static_cast<double>(end - begin);
          double mean = 0.0;
          for (std::size_t c = begin; c < end; ++c) mean += xr[c];
          mean /= count;
          double var = 0.0;
          for (std::size_t c = begin; c < end; ++c) var += (xr[c] - mean) * (xr[c] - mean);
          out.at(r, l) = mean;
          out.at(r, segs + l) = std::sqrt(var / count + n.attr);
          begin = end;
        }
      }
      n.value = std::move(out);
      break;
    }
    case Op::segment_axpy: {
      const Tensor& x = in(0);
      const Tensor& sc = in(1);
      const Tensor& u = in(2);
      const std::size_t cols = x.cols(), segs = n.rows.size();
      Tensor out = x;
      for (std::size_t r = 0; r < x.rows(); ++r) {
        double* o = out.data().data() + r * cols;
        const double* ur = u.data().data() + r * cols;
        std::size_t begin = 0;
        for (std::size_t l = 0; l < segs; ++l) {
          const double f = sc.at(r, l);
          for (std::size_t c = begin; c < n.rows[l]; ++c) o[c] += f * ur[c];
          begin = n.rows[l];
        }
      }
      n.value = std::move(out);
      break;
    }
  }
  if (!n.value.all_finite())
    throw NonFiniteError(std::string("non-finite value produced by ") + op_name(n.op) + " node " +
                             std::to_string(index),
                         index);
}

void Graph::evaluate_from(std::size_t first) {
  for (std::size_t i = first; i < nodes_.size(); ++i) evaluate(i);
}

std::map<std::string, Tensor> Graph::forward(const std::map<std::string, Tensor>& bindings) {
  std::size_t first = nodes_.size();
  for (const auto& [name, tensor] : bindings) {
    auto it = leaves_.find(name);
    if (it == leaves_.end()) throw ShapeError("forward: unknown input '" + name + "'");
    Node& leaf = nodes_[it->second];
    Tensor bound = as_matrix(tensor);
    if (bound.shape() != leaf.value.shape())
      throw ShapeError("forward: input '" + name + "' has shape " + shape_string(bound.shape()) +
                       ", expected " + shape_string(leaf.value.shape()));
    leaf.value = std::move(bound);
    first = std::min(first, it->second + 1);
  }
  evaluate_from(first);
  std::map<std::string, Tensor> out;
  for (const auto& [name, index] : outputs_) out[name] = nodes_[index].value;
  return out;
}

GradientMap Graph::backward(NodeId scalar_output) const {
  const std::size_t root = scalar_output.index;
  if (root >= nodes_.size()) throw ShapeError("backward: node out of range");
  if (nodes_[root].value.size() != 1)
    throw ShapeError("backward: output must be scalar, got " +
                     shape_string(nodes_[root].value.shape()));

  std::vector<Tensor> grads(root + 1);
  grads[root] = Tensor::filled(1, 1, 1.0);

  for (std::size_t idx = root + 1; idx-- > 0;) {
    const Node& n = nodes_[idx];
    if (!n.requires_grad || grads[idx].size() == 0) continue;
    const Tensor& g = grads[idx];
    auto in = [&](std::size_t k) -> const Tensor& { return nodes_[n.inputs[k]].value; };
    auto wants = [&](std::size_t k) { return nodes_[n.inputs[k]].requires_grad; };
    auto send = [&](std::size_t k, Tensor delta) { accumulate(grads[n.inputs[k]], std::move(delta)); };

    switch (n.op) {
      case Op::input:
      case Op::param:
      case Op::constant:
      case Op::stop_gradient:
        break;
      case Op::matmul: {
        if (wants(0)) {
          Tensor da = Tensor::zeros(in(0).rows(), in(0).cols());
          view(da).noalias() = view(g) * view(in(1)).transpose();
          send(0, std::move(da));
        }
        if (wants(1)) {
          Tensor db = Tensor::zeros(in(1).rows(), in(1).cols());
          view(db).noalias() = view(in(0)).transpose() * view(g);
          send(1, std::move(db));
        }
        break;
      }
      case Op::add:
      case Op::sub: {
        if (wants(1)) {
          Tensor db = reduce_to(g, in(1));
          if (n.op == Op::sub)
            for (auto& v : db.data()) v = -v;
          send(1, std::move(db));
        }
        if (wants(0)) send(0, std::move(grads[idx]));
        break;
      }
      case Op::mul:
      case Op::div: {
        const Tensor& a = in(0);
        const Tensor& b = in(1);
        const bool is_div = n.op == Op::div;
        if (wants(0)) {
          Tensor da = broadcast_apply(g, b, [is_div](double gv, double bv) {
            return is_div ? gv / bv : gv * bv;
          });
          send(0, std::move(da));
        }
        if (wants(1)) {
          Tensor full(a.shape());
          const std::size_t rows = a.rows(), cols = a.cols();
          const std::size_t br = b.rows(), bc = b.cols();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) {
              const std::size_t i = r * cols + c;
              const double bv = b[(br == 1 ? 0 : r) * bc + (bc == 1 ? 0 : c)];
              full[i] = is_div ? -g[i] * a[i] / (bv * bv) : g[i] * a[i];
            }
          send(1, reduce_to(full, b));
        }
        break;
      }
      case Op::scale: {
        const double f = n.attr;
        send(0, map_values(g, [f](double x) { return f * x; }));
        break;
      }
      case Op::add_scalar:
        send(0, std::move(grads[idx]));
        break;
      case Op::concat_cols: {
        const std::size_t rows = g.rows(), cols = g.cols();
        std::size_t offset = 0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          const std::size_t width = in(k).cols();
          if (wants(k)) {
            Tensor part = Tensor::zeros(rows, width);
            for (std::size_t r = 0; r < rows; ++r)
              std::copy_n(g.data().begin() + r * cols + offset, width,
                          part.data().begin() + r * width);
            send(k, std::move(part));
          }
          offset += width;
        }
        break;
      }
      case Op::slice_cols: {
        // Added in place: slices of one wide tensor would otherwise each
        // allocate a full-width zero gradient.
        const Tensor& a = in(0);
        Tensor& slot = grads[n.inputs[0]];
        if (slot.size() == 0) slot = Tensor::zeros(a.rows(), a.cols());
        const std::size_t width = n.end - n.begin;
        for (std::size_t r = 0; r < a.rows(); ++r) {
          const double* src = g.data().data() + r * width;
          double* dst = slot.data().data() + r * a.cols() + n.begin;
          for (std::size_t c = 0; c < width; ++c) dst[c] += src[c];
        }
        break;
      }
      case Op::slice_rows: {
        const Tensor& a = in(0);
        Tensor da = Tensor::zeros(a.rows(), a.cols());
        std::copy(g.data().begin(), g.data().end(), da.data().begin() + n.begin * a.cols());
        send(0, std::move(da));
        break;
      }
      case Op::gather_rows: {
        const Tensor& a = in(0);
        Tensor da = Tensor::zeros(a.rows(), a.cols());
        for (std::size_t r = 0; r < n.rows.size(); ++r)
          for (std::size_t c = 0; c < a.cols(); ++c)
            da[n.rows[r] * a.cols() + c] += g[r * a.cols() + c];
        send(0, std::move(da));
        break;
      }
      case Op::row_matvec: {
        const Tensor& x = in(0);
        const Tensor& w = in(1);
        const std::size_t rows = x.rows(), width = x.cols(), out_dim = n.end;
        if (wants(0)) {
          Tensor dx = Tensor::zeros(rows, width);
          for (std::size_t r = 0; r < rows; ++r) {
            const double* gr = g.data().data() + r * out_dim;
            const double* wr = w.data().data() + r * width * out_dim;
            for (std::size_t i = 0; i < width; ++i) {
              double acc = 0.0;
              for (std::size_t j = 0; j < out_dim; ++j) acc += wr[i * out_dim + j] * gr[j];
              dx[r * width + i] = acc;
            }
          }
          send(0, std::move(dx));
        }
        if (wants(1)) {
          Tensor dw = Tensor::zeros(rows, width * out_dim);
          for (std::size_t r = 0; r < rows; ++r) {
            const double* gr = g.data().data() + r * out_dim;
            const double* xr = x.data().data() + r * width;
            double* dwr = dw.data().data() + r * width * out_dim;
            for (std::size_t i = 0; i < width; ++i)
              for (std::size_t j = 0; j < out_dim; ++j) dwr[i * out_dim + j] = xr[i] * gr[j];
          }
          send(1, std::move(dw));
        }
        break;
      }
      case Op::tanh: {
        Tensor da(g.shape());
        for (std::size_t i = 0; i < g.size(); ++i) da[i] = g[i] * (1.0 - n.value[i] * n.value[i]);
        send(0, std::move(da));
        break;
      }
      case Op::relu:
      case Op::hinge: {
        Tensor da(g.shape());
        for (std::size_t i = 0; i < g.size(); ++i) da[i] = in(0)[i] > 0.0 ? g[i] : 0.0;
        send(0, std::move(da));
        break;
      }
      case Op::sigmoid: {
        Tensor da(g.shape());
        for (std::size_t i = 0; i < g.size(); ++i) da[i] = g[i] * n.value[i] * (1.0 - n.value[i]);
        send(0, std::move(da));
        break;
      }
      case Op::square: {
        Tensor da(g.shape());
        for (std::size_t i = 0; i < g.size(); ++i) da[i] = 2.0 * in(0)[i] * g[i];
        send(0, std::move(da));
        break;
      }
      case Op::sqrt: {
        Tensor da(g.shape());
        for (std::size_t i = 0; i < g.size(); ++i)
          da[i] = n.value[i] > 0.0 ? 0.5 * g[i] / n.value[i] : 0.0;
        send(0, std::move(da));
        break;
      }
      case Op::sum:
      case Op::mean: {
        const double f = n.op == Op::mean ? g[0] / static_cast<double>(in(0).size()) : g[0];
        send(0, Tensor(in(0).shape(), std::vector<double>(in(0).size(), f)));
        break;
      }
      case Op::row_sum: {
        const Tensor& a = in(0);
        Tensor da(a.shape());
        for (std::size_t r = 0; r < a.rows(); ++r)
          for (std::size_t c = 0; c < a.cols(); ++c) da[r * a.cols() + c] = g[r];
        send(0, std::move(da));
        break;
      }
      case Op::row_norm: {
        const Tensor& a = in(0);
        Tensor da(a.shape());
        for (std::size_t r = 0; r < a.rows(); ++r) {
          const double len = n.value[r];
          if (len == 0.0) continue;
          for (std::size_t c = 0; c < a.cols(); ++c)
            da[r * a.cols() + c] = g[r] * a[r * a.cols() + c] / len;
        }
        send(0, std::move(da));
        break;
      }
      case Op::norm: {
        const Tensor& a = in(0);
        Tensor da(a.shape());
        const double len = n.value[0];
        if (len != 0.0)
          for (std::size_t i = 0; i < a.size(); ++i) da[i] = g[0] * a[i] / len;
        send(0, std::move(da));
        break;
      }
      case Op::affine: {
        const Tensor& x = in(0);
        const Tensor& w = in(1);
        if (wants(0)) {
          Tensor dx = Tensor::zeros(x.rows(), x.cols());
          view(dx).noalias() = view(g) * view(w).transpose();
          send(0, std::move(dx));
        }
        if (wants(1)) {
          Tensor dw = Tensor::zeros(w.rows(), w.cols());
          view(dw).noalias() = view(x).transpose() * view(g);
          send(1, std::move(dw));
        }
        if (wants(2)) {
          Tensor db = Tensor::zeros(1, g.cols());
          view(db).row(0) = view(g).colwise().sum();
          send(2, std::move(db));
        }
        break;
      }
      case Op::segment_moments: {
        // d mean/dx = 1/n; d std/dx = (x - mean) / (n std).
        const Tensor& x = in(0);
        const std::size_t segs = n.rows.size(), cols = x.cols();
        Tensor dx = Tensor::zeros(x.rows(), cols);
        for (std::size_t r = 0; r < x.rows(); ++r) {
          const double* xr = x.data().data() + r * cols;
          double* dr = dx.data().data() + r * cols;
          std::size_t begin = 0;
          for (std::size_t l = 0; l < segs; ++l) {
            const std::size_t end = n.rows[l];
            const double count = static_cast<double>(end - begin);
            const double mean = n.value.at(r, l);
            const double gm = g.at(r, l) / count;
            const double gs = g.at(r, segs + l) / (count * n.value.at(r, segs + l));
            for (std::size_t c = begin; c < end; ++c) dr[c] = gm + gs * (xr[c] - mean);
            begin = end;
          }
        }
        send(0, std::move(dx));
        break;
      }
      case Op::segment_axpy: {
        const Tensor& sc = in(1);
        const Tensor& u = in(2);
        const std::size_t cols = g.cols(), segs = n.rows.size();
        if (wants(1)) {
          Tensor ds = Tensor::zeros(sc.rows(), segs);
          for (std::size_t r = 0; r < g.rows(); ++r) {
            std::size_t begin = 0;
            for (std::size_t l = 0; l < segs; ++l) {
              double acc = 0.0;
              for (std::size_t c = begin; c < n.rows[l]; ++c) acc += g[r * cols + c] * u[r * cols + c];
              ds.at(r, l) = acc;
              begin = n.rows[l];
            }
          }
          send(1, std::move(ds));
        }
        if (wants(2)) {
          Tensor du = Tensor::zeros(g.rows(), cols);
          for (std::size_t r = 0; r < g.rows(); ++r) {
            std::size_t begin = 0;
            for (std::size_t l = 0; l < segs; ++l) {
              const double f = sc.at(r, l);
              for (std::size_t c = begin; c < n.rows[l]; ++c) du[r * cols + c] = f * g[r * cols + c];
              begin = n.rows[l];
            }
          }
          send(2, std::move(du));
        }
        if (wants(0)) send(0, std::move(grads[idx]));
        break;
      }
    }
    if (n.op != Op::param) grads[idx] = Tensor();
  }

  GradientMap out;
  for (const auto& [name, index] : leaves_) {
    const Node& n = nodes_[index];
    if (n.op != Op::param || !n.trainable) continue;
    if (index <= root && grads[index].size() != 0)
      out[name] = grads[index].reshaped(n.value.shape());
    else
      out[name] = Tensor(n.value.shape());
  }
  return out;
}

}  // namespace hypergoal
