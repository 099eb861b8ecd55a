#include "gridvla/nn/graph.hpp"

#include <cmath>

#include "gridvla/common/error.hpp"

namespace gridvla::nn {

const Tensor& Var::value() const { return graph_->value(id_); }
bool Var::requires_grad() const { return graph_->requires_grad(id_); }

Var Graph::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Graph::variable(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Graph::bind(Tensor& tensor, bool trainable, const std::string& key) {
  if (auto it = bound_ids_.find(key); it != bound_ids_.end()) return {this, it->second};
  Node n;
  n.value = Tensor(tensor.shape(), std::vector<double>(tensor.data().begin(), tensor.data().end()));
  n.requires_grad = trainable;
  n.bound = &tensor;
  n.bound_key = key;
  nodes_.push_back(std::move(n));
  bound_ids_.emplace(key, nodes_.size() - 1);
  return {this, nodes_.size() - 1};
}

Var Graph::parameter(ParameterSet& params, std::string_view name) {
  auto& e = params.entry(name);
  return bind(e.value, e.trainable, std::string(name));
}

Var Graph::adapter_down(ParameterSet& params, std::string_view name) {
  auto& e = params.entry(name);
  if (!e.adapter) throw ContractError("parameter '" + std::string(name) + "' has no adapter");
  return bind(e.adapter->down, true, adapter_down_key(name));
}

Var Graph::adapter_up(ParameterSet& params, std::string_view name) {
  auto& e = params.entry(name);
  if (!e.adapter) throw ContractError("parameter '" + std::string(name) + "' has no adapter");
  return bind(e.adapter->up, true, adapter_up_key(name));
}

Var Graph::emit(Tensor value, std::initializer_list<Var> inputs, Backward backward) {
  bool needs = false;
  for (const auto& v : inputs) needs = needs || v.requires_grad();
  Node n;
  n.value = std::move(value);
  n.requires_grad = needs;
  if (needs) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Graph::emit(Tensor value, const std::vector<Var>& inputs, Backward backward) {
  bool needs = false;
  for (const auto& v : inputs) needs = needs || v.requires_grad();
  Node n;
  n.value = std::move(value);
  n.requires_grad = needs;
  if (needs) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

std::span<double> Graph::grad(std::size_t id) {
  auto& n = nodes_[id];
  if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

void Graph::backward(Var loss) {
  if (loss.size() != 1) {
    throw ContractError("backward() requires a scalar loss, got shape " + shape_string(loss.shape()));
  }
  if (!nodes_[loss.id()].requires_grad) return;
  grad(loss.id())[0] = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, i);
  }
  for (auto& n : nodes_) {
    if (n.bound == nullptr || !n.requires_grad) continue;
    auto dst = n.bound->grad();
    if (n.grad.empty()) continue;
    for (std::size_t k = 0; k < n.grad.size(); ++k) {
      if (!std::isfinite(n.grad[k])) throw NumericError("non-finite gradient in parameter '" + n.bound_key + "'");
      dst[k] += n.grad[k];
    }
  }
}

}  // namespace gridvla::nn
