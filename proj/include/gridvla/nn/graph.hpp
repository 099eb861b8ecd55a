#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "gridvla/nn/parameter_set.hpp"
#include "gridvla/nn/tensor.hpp"

namespace gridvla::nn {

class Graph;

// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
  bool requires_grad() const;
  Graph& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

// Reverse-mode tape. Nodes are appended in evaluation order, so reverse
// insertion order is a valid topological order for backpropagation.
class Graph {
 public:
  using Backward = std::function<void(Graph&, std::size_t)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  // Free leaf that receives a gradient; used by tests and oracles.
  Var variable(Tensor value);

  // Leaf bound to a parameter slot. Repeated calls return the same node.
  // Gradients are accumulated into the slot's tensor by backward().
  Var parameter(ParameterSet& params, std::string_view name);
  Var adapter_down(ParameterSet& params, std::string_view name);
  Var adapter_up(ParameterSet& params, std::string_view name);

  // Appends an op result. `backward` is dropped when no input requires grad.
  Var emit(Tensor value, std::initializer_list<Var> inputs, Backward backward);
  Var emit(Tensor value, const std::vector<Var>& inputs, Backward backward);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  // Gradient accumulator of a node; allocated on first use.
  std::span<double> grad(std::size_t id);
  std::span<const double> grad(Var v) const { return nodes_[v.id()].grad; }
  std::size_t node_count() const { return nodes_.size(); }

  // Runs reverse-mode differentiation from a scalar and writes parameter
  // gradients. Throws ContractError for non-scalar losses and NumericError
  // naming the parameter when a gradient is not finite.
  void backward(Var loss);

 private:
  struct Node {
    Tensor value;
    Buffer grad;
    bool requires_grad = false;
    Backward backward;
    Tensor* bound = nullptr;
    std::string bound_key;
  };

  Var bind(Tensor& tensor, bool trainable, const std::string& key);

  std::vector<Node> nodes_;
  std::unordered_map<std::string, std::size_t> bound_ids_;
};

}  // namespace gridvla::nn
