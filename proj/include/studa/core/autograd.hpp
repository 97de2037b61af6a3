#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "studa/core/tensor.hpp"

namespace studa {

namespace detail {

inline bool& grad_mode() {
  static thread_local bool enabled = true;
  return enabled;
}

template <class T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  Tensor<T>& grad_buffer() {
    if (grad.size() != value.size()) grad = Tensor<T>(value.shape(), T(0));
    return grad;
  }
};

}  // namespace detail

// Disables graph construction on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

inline bool grad_enabled() { return detail::grad_mode(); }

// Handle to a node of a dynamically recorded computation graph.
template <class T>
class Var {
 public:
  using Node = detail::Node<T>;

  Var() = default;
  explicit Var(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  static Var leaf(Tensor<T> value, bool requires_grad = false) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return Var(std::move(n));
  }

  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  Tensor<T>& grad() { return node_->grad_buffer(); }
  const Tensor<T>& grad() const { return node_->grad; }
  void zero_grad() {
    if (node_->grad.size()) node_->grad.fill(T(0));
  }
  T item() const { return node_->value[0]; }
  bool defined() const { return static_cast<bool>(node_); }

  // Same value, cut from the graph.
  Var detach() const { return leaf(node_->value, false); }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

template <class T>
Var<T> constant(Tensor<T> value) {
  return Var<T>::leaf(std::move(value), false);
}

// Creates an op result. `backward` receives the result node and must
// accumulate into parents' grad buffers.
template <class T, class Fn>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> parents, Fn&& backward) {
  auto n = std::make_shared<detail::Node<T>>();
  n->value = std::move(value);
  if (grad_enabled()) {
    for (const auto& p : parents) n->requires_grad = n->requires_grad || p.requires_grad();
  }
  if (n->requires_grad) {
    n->parents.reserve(parents.size());
    for (const auto& p : parents) n->parents.push_back(p.node());
    n->backward = std::forward<Fn>(backward);
  }
  return Var<T>(std::move(n));
}

// Reverse-mode sweep from a scalar root. Leaf grads accumulate.
template <class T>
void backward(const Var<T>& root) {
  using Node = detail::Node<T>;
  if (!root.requires_grad()) return;
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  Tensor<T>& g = root.node()->grad_buffer();
  g.fill(T(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->grad.size()) n->backward(*n);
  }
  // Free intermediate grads so a retained graph does not double count.
  for (Node* n : order)
    if (n->backward) n->grad = Tensor<T>();
}

}  // namespace studa
