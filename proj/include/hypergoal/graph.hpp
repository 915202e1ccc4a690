#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hypergoal/tensor.hpp"

namespace hypergoal {

enum class Op : std::uint8_t {
  input,
  param,
  constant,
  matmul,
  add,
  sub,
  mul,
  div,
  scale,
  add_scalar,
  concat_cols,
  slice_cols,
  slice_rows,
  gather_rows,
  row_matvec,
  tanh,
  relu,
  sigmoid,
  hinge,
  square,
  sqrt,
  sum,
  mean,
  row_sum,
  row_norm,
  norm,
  stop_gradient,
  affine,
  segment_moments,
  segment_axpy,
};

const char* op_name(Op op);

struct NodeId {
  std::size_t index = 0;
  friend bool operator==(NodeId, NodeId) = default;
};

/// Gradient of a scalar node with respect to each trainable parameter, keyed
/// by parameter name.
using GradientMap = std::map<std::string, Tensor>;

/// Dynamic computation graph over rank-2 tensors.
///
/// Nodes are appended in topological order and evaluated eagerly as they are
/// added, so a model can be built with ordinary function calls. `forward`
/// rebinds named leaves and re-evaluates every downstream node; `backward`
/// runs reverse-mode accumulation from a [1,1] node.
///
/// Binary elementwise ops (add, sub, mul, div) broadcast their second operand
/// when it has shape [1,C], [R,1] or [1,1] against a first operand of [R,C].
/// Subgradients at the kinks of relu, hinge and the norms are zero.
class Graph {
 public:
  NodeId input(const std::string& name, Tensor value);
  /// Named parameter leaf. Repeated calls with the same name return the same
  /// node. Non-trainable parameters receive no gradient.
  NodeId param(const std::string& name, const Tensor& value, bool trainable = true);
  NodeId constant(Tensor value);

  NodeId matmul(NodeId a, NodeId b);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId div(NodeId a, NodeId b);
  NodeId scale(NodeId a, double factor);
  NodeId add_scalar(NodeId a, double offset);
  NodeId concat_cols(const std::vector<NodeId>& parts);
  NodeId slice_cols(NodeId a, std::size_t begin, std::size_t end);
  NodeId slice_rows(NodeId a, std::size_t begin, std::size_t end);
  NodeId gather_rows(NodeId a, std::vector<std::size_t> rows);
  /// Per-row linear map: row r of `x` [R,in] times row r of `weights`
  /// [R,in*out] read as an in x out row-major matrix. Result [R,out].
  NodeId row_matvec(NodeId x, NodeId weights, std::size_t out);
  NodeId tanh(NodeId a);
  NodeId relu(NodeId a);
  NodeId sigmoid(NodeId a);
  /// max(0, x), elementwise.
  NodeId hinge(NodeId a);
  NodeId square(NodeId a);
  NodeId sqrt(NodeId a);
  NodeId sum(NodeId a);
  NodeId mean(NodeId a);
  NodeId row_sum(NodeId a);
  NodeId row_norm(NodeId a);
  NodeId norm(NodeId a);
  NodeId stop_gradient(NodeId a);

  /// x W + b with b [1,out]; one node instead of matmul then add.
  NodeId affine(NodeId x, NodeId w, NodeId b);
  /// Columns of `x` split into consecutive segments ending at `ends`
  /// (strictly increasing, last == cols). Row r of the result holds the
  /// segment means followed by sqrt(segment variance + eps).
  NodeId segment_moments(NodeId x, std::vector<std::size_t> ends, double eps);
  /// x + s (.) u where s [R, n_segments] is spread over the columns of each segment.
  NodeId segment_axpy(NodeId x, NodeId s, NodeId u, std::vector<std::size_t> ends);

  void mark_output(const std::string& name, NodeId node);

  /// Rebinds the named input/parameter leaves and re-evaluates the graph.
  /// Returns the value of every marked output.
  std::map<std::string, Tensor> forward(const std::map<std::string, Tensor>& bindings);
  GradientMap backward(NodeId scalar_output) const;

  const Tensor& value(NodeId node) const { return nodes_.at(node.index).value; }
  double scalar(NodeId node) const;
  Op op(NodeId node) const { return nodes_.at(node.index).op; }
  std::size_t size() const { return nodes_.size(); }

  std::vector<std::string> parameter_names() const;
  bool has_leaf(const std::string& name) const { return leaves_.count(name) > 0; }
  const Tensor& leaf_value(const std::string& name) const;

 private:
  struct Node {
    Op op = Op::constant;
    std::vector<std::size_t> inputs;
    Tensor value;
    std::string name;
    bool trainable = false;
    bool requires_grad = false;
    double attr = 0.0;
    std::size_t begin = 0;
    std::size_t end = 0;
    std::vector<std::size_t> rows;
  };

  NodeId push(Node node);
  NodeId unary(Op op, NodeId a);
  NodeId binary(Op op, NodeId a, NodeId b);
  void evaluate(std::size_t index);
  void evaluate_from(std::size_t first);

  std::vector<Node> nodes_;
  std::map<std::string, std::size_t> leaves_;
  std::map<std::string, std::size_t> outputs_;
};

}  // namespace hypergoal
