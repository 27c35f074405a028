#pragma once

// Tape-based reverse-mode differentiation over dense tensors.
//
// A Graph records nodes in creation order, so the node vector is already a
// topological order and backward() walks it in reverse. Parameter leaves do
// not copy their tensors: values are read from, and gradients accumulated
// into, the owning Parameter.

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mtltag/tensor.hpp"

namespace mtltag {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  /// Zero-filled gradient buffer shaped like value.
  Tensor& grad_buffer();
};

/// Owns the named parameters of a model. Addresses are stable.
class ParameterStore {
 public:
  Parameter& add(std::string name, Tensor init, bool trainable = true);
  Parameter& get(std::string_view name);
  const Parameter& get(std::string_view name) const;
  Parameter* find(std::string_view name);
  const Parameter* find(std::string_view name) const;

  std::span<const std::unique_ptr<Parameter>> all() const { return params_; }
  std::vector<Parameter*> trainable();
  std::size_t size() const { return params_.size(); }
  /// Total number of scalar entries across all parameters.
  std::size_t value_count() const;
  void zero_grad();

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::unordered_map<std::string, Parameter*> by_name_;
};

namespace ad {

enum class Op {
  Constant,
  Parameter,
  MatMul,
  Add,
  Sub,
  Mul,
  Scale,
  AddBias,
  Concat,
  Sigmoid,
  Tanh,
  Exp,
  Log,
  LogSumExp,
  Max,
  Embedding,
  Dropout,
  Sum,
  Mean,
  Slice,
  CrfNll,
};

std::string_view op_name(Op op);

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool valid() const { return graph_ != nullptr; }

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  /// Leaf bound to a parameter. Repeated calls return the same node.
  Var param(Parameter& p);

  const Tensor& value(std::size_t id) const;
  Op op(std::size_t id) const { return nodes_[id].op; }
  const std::vector<std::size_t>& parents(std::size_t id) const { return nodes_[id].parents; }
  std::size_t size() const { return nodes_.size(); }

  /// Gradient accumulator of a node, allocated (zeroed) on first access.
  Tensor& grad(std::size_t id);
  bool has_grad(std::size_t id) const;

  /// Seeds d(root)/d(root) = 1 and propagates to every reachable node.
  /// Parameter gradients accumulate into Parameter::grad.
  void backward(Var root);

  /// Appends a computed node. Rejects non-finite values, naming the op.
  Var record(Op op, Tensor value, std::vector<std::size_t> parents, BackwardFn backward);

 private:
  struct Node {
    Op op = Op::Constant;
    Tensor value;
    Tensor grad;
    Parameter* param = nullptr;
    std::vector<std::size_t> parents;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
};

// Primitives. All operands must belong to the same graph.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
/// Adds a length-n bias to every row of an m×n matrix.
Var add_bias(Var m, Var bias);
/// Concatenates rank-2 operands along axis 0 (rows) or 1 (columns).
Var concat(std::span<const Var> parts, int axis);
Var sigmoid(Var a);
Var tanh(Var a);
Var exp(Var a);
Var log(Var a);
/// Reduces a rank-2 operand along an axis; axis 1 yields m×1, axis 0 yields 1×n.
Var logsumexp(Var a, int axis);
Var max(Var a, int axis);
/// Gathers rows of a table into an ids.size()×d matrix.
Var embedding(Var table, std::span<const int> ids);
/// Element-wise product with a fixed mask (already carrying any rescaling).
Var dropout(Var a, const Tensor& mask);
Var sum(Var a);
Var mean(Var a);
/// Half-open range [begin, end) along axis 0 or 1 of a rank-2 operand.
Var slice(Var a, int axis, std::size_t begin, std::size_t end);

}  // namespace ad

/// Gradients of a scalar loss for every trainable parameter in the store.
/// Parameters unreachable from the root map to zero tensors. Existing
/// Parameter::grad contents are cleared first.
std::map<std::string, Tensor> backward(ad::Var loss_root, ParameterStore& store);

}  // namespace mtltag
