#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "tpnet/tensor.hpp"

namespace tpnet {

// Reverse-mode autodiff over Tensor values. A Var is a cheap handle to a node
// in a dynamically built graph; nodes own their value, their accumulated
// gradient and a closure that pushes the gradient to their inputs.
struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  // Returns the gradient buffer, allocating zeros if needed.
  Tensor& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  const Tensor& value() const { return node_->value; }
  // Direct write access; only meaningful for leaves (parameters, inputs).
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }

  bool has_grad() const { return !node_->grad.empty(); }
  // Gradient after backward(); zeros of the value's shape if none flowed here.
  Tensor grad() const;
  void zero_grad() { node_->grad = Tensor(); }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  friend Var make_op(Tensor, std::vector<Var>, std::function<void(Node&)>);
  std::shared_ptr<Node> node_;
};

// Creates the result node of an operation. When gradients are disabled or no
// input requires them, the result is a constant leaf and `backward` is dropped.
Var make_op(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward);

// Accumulates d(root)/d(leaf) into every reachable node that requires grad.
// The root is seeded with ones (so a scalar root gives the plain gradient).
void backward(const Var& root);

bool grad_enabled();

// Disables graph construction on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace tpnet
