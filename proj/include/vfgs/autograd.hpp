#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "vfgs/tensor.hpp"

namespace vfgs {

// Minimal dynamic reverse-mode tape. Each differentiable op produces a Node
// that remembers its parents and a closure mapping the node's gradient onto
// the parents' gradients.

class GradMode {
 public:
  static bool enabled() { return flag(); }
  static void set(bool on) { flag() = on; }

 private:
  static bool& flag() {
    thread_local bool on = true;
    return on;
  }
};

class NoGradGuard {
 public:
  NoGradGuard() : prev_(GradMode::enabled()) { GradMode::set(false); }
  ~NoGradGuard() { GradMode::set(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

template <typename T>
struct Node {
  using Ptr = std::shared_ptr<Node>;
  using BackwardFn = std::function<void(const Tensor<T>& grad_out, const std::vector<Ptr>& parents)>;

  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::vector<Ptr> parents;
  BackwardFn backward;

  bool is_leaf() const { return !backward; }

  Tensor<T>& grad_buffer() {
    if (grad.empty() && value.numel() > 0) grad = Tensor<T>::zeros_like(value);
    return grad;
  }
  void accumulate(const Tensor<T>& g) {
    if (grad.empty()) {
      grad = g;
    } else {
      grad += g;
    }
  }
};

template <typename T>
class Var {
 public:
  using NodePtr = typename Node<T>::Ptr;

  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false) : n_(std::make_shared<Node<T>>()) {
    n_->value = std::move(value);
    n_->requires_grad = requires_grad;
  }
  explicit Var(NodePtr n) : n_(std::move(n)) {}

  bool defined() const { return static_cast<bool>(n_); }
  const Tensor<T>& value() const { return n_->value; }
  Tensor<T>& mutable_value() { return n_->value; }
  const Tensor<T>& grad() const { return n_->grad; }
  Tensor<T>& grad_buffer() { return n_->grad_buffer(); }
  const Shape& shape() const { return n_->value.shape(); }
  Index dim(std::size_t i) const { return n_->value.dim(i); }
  bool requires_grad() const { return n_->requires_grad; }
  void zero_grad() { n_->grad = Tensor<T>(); }
  const NodePtr& node() const { return n_; }

  // Detached copy sharing no history.
  Var detach() const { return Var(n_->value, false); }

 private:
  NodePtr n_;
};

// Builds the output Var of an op. History is recorded only when grad mode is
// on and at least one input requires a gradient.
template <typename T>
Var<T> make_op_result(Tensor<T> value, std::vector<Var<T>> inputs,
                      typename Node<T>::BackwardFn backward) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  if (GradMode::enabled()) {
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (any) {
      n->requires_grad = true;
      n->parents.reserve(inputs.size());
      for (auto& in : inputs) n->parents.push_back(in.node());
      n->backward = std::move(backward);
    }
  }
  return Var<T>(std::move(n));
}

// Runs reverse accumulation from `root`. With no seed the root must be a
// scalar and is seeded with 1. Intermediate gradients and the recorded graph
// are released afterwards; leaf gradients accumulate.
template <typename T>
void backward(const Var<T>& root, Tensor<T> seed = Tensor<T>()) {
  if (!root.requires_grad()) return;
  if (seed.empty()) {
    if (root.value().numel() != 1) throw ShapeError("backward without seed needs a scalar root");
    seed = Tensor<T>(root.shape(), T(1));
  }
  root.value().check_same(seed, "backward seed");

  using NodePtr = typename Node<T>::Ptr;
  std::vector<NodePtr> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<NodePtr, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      const NodePtr& p = node->parents[next++];
      if (p->requires_grad && !seen.count(p.get())) {
        seen.insert(p.get());
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->accumulate(seed);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>& n = **it;
    if (n.is_leaf()) continue;
    if (!n.grad.empty()) n.backward(n.grad, n.parents);
    n.grad = Tensor<T>();
    n.backward = nullptr;
    n.parents.clear();
  }
}

}  // namespace vfgs
