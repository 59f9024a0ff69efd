#include "catrinet/graph.hpp"

#include <algorithm>
#include <string>

#include "catrinet/errors.hpp"

namespace catrinet {

const Tensor& Var::value() const { return graph_->value(*this); }

double Var::item() const {
  const Tensor& t = value();
  if (t.size() != 1) {
    throw ContractError("item() on non-scalar tensor " + shape_str(t.shape()));
  }
  return t[0];
}

Var Graph::constant(Tensor value) {
  return record("constant", std::move(value), {}, nullptr);
}

Var Graph::variable(Tensor value) {
  if (!value.all_finite()) throw NonFiniteError("variable holds non-finite values");
  Node n;
  n.owned = std::move(value);
  n.op = "variable";
  n.requires_grad = grad_enabled_;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::parameter(Tensor& param) {
  if (auto it = bound_.find(&param); it != bound_.end()) return Var(this, it->second);
  if (!param.all_finite()) throw NonFiniteError("parameter holds non-finite values");
  Node n;
  n.bound = &param;
  n.op = "parameter";
  n.requires_grad = grad_enabled_ && param.requires_grad();
  nodes_.push_back(std::move(n));
  bound_.emplace(&param, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Graph::record(std::string_view op, Tensor value, std::vector<Var> parents,
                  BackwardFn backward) {
  if (!value.all_finite()) {
    throw NonFiniteError("operation '" + std::string(op) + "' produced non-finite " +
                         "values in tensor " + shape_str(value.shape()));
  }
  Node n;
  n.owned = std::move(value);
  n.op = op;
  n.requires_grad = std::any_of(parents.begin(), parents.end(),
                                [this](Var p) { return nodes_[p.id()].requires_grad; });
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

const Tensor& Graph::value(Var v) const { return node_value(nodes_[v.id()]); }

std::span<const double> Graph::grad(Var v) const { return nodes_[v.id()].grad; }

std::span<double> Graph::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(node_value(n).size(), 0.0);
  return n.grad;
}

void Graph::backward(Var loss) {
  if (!grad_enabled_) throw ContractError("backward called on a graph built without gradients");
  if (value(loss).size() != 1) {
    throw ContractError("backward requires a scalar loss, got " +
                        shape_str(value(loss).shape()));
  }
  for (Node& n : nodes_) n.grad.clear();
  grad_buffer(loss.id())[0] = 1.0;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) {
      // Callbacks only touch parent buffers, so this reference stays valid.
      n.backward(*this, node_value(n), n.grad);
    }
    if (n.bound != nullptr && n.bound->requires_grad()) {
      std::span<double> dst = n.bound->grad();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += n.grad[i];
    }
  }
}

}  // namespace catrinet
