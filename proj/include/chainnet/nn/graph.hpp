#pragma once

// Reverse-mode tape. Every operation appends a node holding its output value
// and a closure that, given the node's output gradient, accumulates
// gradients into its parents. backward() replays the closures in reverse
// creation order, which is a valid topological order for a tape.

#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <vector>

#include "chainnet/errors.hpp"
#include "chainnet/nn/tensor.hpp"

namespace chainnet::nn {

struct Var {
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::size_t id = kNone;
  bool valid() const { return id != kNone; }
};

enum class GradMode { Enabled, Disabled };

template <class T>
class Graph {
 public:
  // Called with the graph and the node's own id; reads grad(self) and
  // accumulates into the parents.
  using BackwardFn = std::function<void(Graph&, Var self)>;

  explicit Graph(GradMode mode = GradMode::Enabled) : grad_enabled_(mode == GradMode::Enabled) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool grad_enabled() const { return grad_enabled_; }
  std::size_t size() const { return nodes_.size(); }

  // Leaf holding a copy of `value`. With requires_grad the gradient is kept
  // and can be read back after backward().
  Var input(Tensor<T> value, bool requires_grad = false) {
    auto node = std::make_unique<Node>();
    node->own_value = std::move(value);
    node->value = &node->own_value;
    node->requires_grad = grad_enabled_ && requires_grad;
    return push(std::move(node));
  }

  // Leaf bound to a parameter; backward accumulates into p.grad.
  Var parameter(Parameter<T>& p) {
    auto node = std::make_unique<Node>();
    node->value = &p.value;
    if (grad_enabled_) {
      if (p.grad.shape() != p.value.shape()) p.grad = Tensor<T>(p.value.shape());
      node->requires_grad = true;
      node->grad = &p.grad;
      node->has_grad = true;
    }
    return push(std::move(node));
  }

  // Read-only binding for inference graphs.
  Var parameter(const Parameter<T>& p) {
    auto node = std::make_unique<Node>();
    node->value = &p.value;
    return push(std::move(node));
  }

  // Appends an operation output. `backward` is dropped when no parent needs
  // a gradient.
  Var emit(Tensor<T> value, std::initializer_list<Var> parents, BackwardFn backward) {
    auto node = std::make_unique<Node>();
    node->own_value = std::move(value);
    node->value = &node->own_value;
    bool needs = false;
    if (grad_enabled_) {
      for (Var p : parents) needs = needs || requires_grad(p);
    }
    node->requires_grad = needs;
    if (needs) node->backward = std::move(backward);
    return push(std::move(node));
  }

  const Tensor<T>& value(Var v) const { return *node(v).value; }
  bool requires_grad(Var v) const { return node(v).requires_grad; }
  bool has_grad(Var v) const { return node(v).has_grad; }

  // Gradient buffer of v, zero-allocated on first access.
  Tensor<T>& grad(Var v) {
    Node& n = node(v);
    if (!n.has_grad) {
      n.own_grad = Tensor<T>(n.value->shape());
      n.grad = &n.own_grad;
      n.has_grad = true;
    }
    return *n.grad;
  }

  // Seeds d(root)/d(root) = 1; root must hold exactly one element.
  void backward(Var root) {
    if (value(root).size() != 1)
      throw ConfigError("backward() without an upstream gradient needs a scalar root, got " +
                        value(root).shape().str());
    Tensor<T> seed(value(root).shape(), T(1));
    backward(root, seed);
  }

  void backward(Var root, const Tensor<T>& upstream) {
    if (!grad_enabled_) throw ConfigError("backward() on a graph built without gradients");
    if (upstream.shape() != value(root).shape())
      throw ConfigError("upstream gradient shape " + upstream.shape().str() +
                        " does not match root " + value(root).shape().str());
    Tensor<T>& g = grad(root);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += upstream[i];
    for (std::size_t i = root.id + 1; i-- > 0;) {
      Node& n = *nodes_[i];
      if (n.backward && n.has_grad) n.backward(*this, Var{i});
    }
  }

 private:
  struct Node {
    Tensor<T> own_value;
    const Tensor<T>* value = nullptr;
    Tensor<T> own_grad;
    Tensor<T>* grad = nullptr;
    bool has_grad = false;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var push(std::unique_ptr<Node> n) {
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }
  Node& node(Var v) {
    if (v.id >= nodes_.size()) throw ConfigError("variable does not belong to this graph");
    return *nodes_[v.id];
  }
  const Node& node(Var v) const {
    if (v.id >= nodes_.size()) throw ConfigError("variable does not belong to this graph");
    return *nodes_[v.id];
  }

  bool grad_enabled_;
  std::vector<std::unique_ptr<Node>> nodes_;
};

}  // namespace chainnet::nn
