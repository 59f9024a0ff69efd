#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "catrinet/tensor.hpp"

namespace catrinet {

class Graph;

/// Handle to a node recorded on a Graph. Cheap to copy; valid as long as the
/// owning graph is alive.
class Var {
 public:
  Var() = default;

  /// Stays valid for the lifetime of the graph.
  const Tensor& value() const;
  Graph& graph() const { return *graph_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return graph_ != nullptr; }

  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  double item() const;

 private:
  friend class Graph;
  Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}

  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Tape of operations in creation order. Creation order is a topological
/// order, so backward is a single reverse sweep visiting each node once.
class Graph {
 public:
  /// Receives the output value and its accumulated gradient; adds into the
  /// parents' gradient buffers through `Graph::grad_buffer`.
  using BackwardFn =
      std::function<void(Graph&, const Tensor& out, std::span<const double> out_grad)>;

  /// With `grad_enabled` false nothing records a backward closure; used for
  /// inference.
  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);

  /// Leaf bound to an external parameter. Binding the same tensor twice
  /// returns the same node. On backward the gradient is added into
  /// `param.grad()` when the parameter requires grad.
  Var parameter(Tensor& param);

  Var record(std::string_view op, Tensor value, std::vector<Var> parents,
             BackwardFn backward);

  const Tensor& value(Var v) const;
  std::span<const double> grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }

  /// Zero-initialised (on first use) gradient buffer of node `id`.
  std::span<double> grad_buffer(std::size_t id);

  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor owned;
    Tensor* bound = nullptr;
    std::string_view op;
    std::vector<double> grad;
    BackwardFn backward;
    bool requires_grad = false;
  };

  const Tensor& node_value(const Node& n) const { return n.bound ? *n.bound : n.owned; }

  std::deque<Node> nodes_;  // stable addresses while nodes are appended
  std::unordered_map<const Tensor*, std::size_t> bound_;
  bool grad_enabled_ = true;
};

}  // namespace catrinet
