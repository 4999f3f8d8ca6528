#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "fbcgan/tensor.hpp"

namespace fbc {

/// Graph node: a value, its accumulated gradient and the closure that pushes
/// the gradient to its parents.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  Tensor& grad_buffer() {
    if (grad.numel() != value.numel()) grad = Tensor::zeros_like(value);
    return grad;
  }
};

/// Handle to a node in the reverse-mode graph. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  static Var from_node(std::shared_ptr<Node> node) {
    Var v;
    v.node_ = std::move(node);
    return v;
  }

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  int dim(std::size_t i) const { return node_->value.dim(i); }
  std::size_t numel() const { return node_->value.numel(); }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  /// Gradient accumulated by the last backward pass (zeros if none).
  const Tensor& grad() const { return node_->grad_buffer(); }
  void zero_grad() { node_->grad = Tensor(); }

  /// Same value, cut from the graph.
  Var detach() const { return Var(node_->value, false); }
  double item() const;

  const std::shared_ptr<Node>& node() const { return node_; }
  bool same_node(const Var& other) const { return node_ == other.node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Runs reverse-mode accumulation from a scalar root.
void backward(const Var& root);

bool grad_enabled();

/// Disables graph construction in the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Builds a result node; attaches `fn` only if some parent needs a gradient.
Var make_result(Tensor value, std::vector<Var> parents, std::function<void(Node&)> fn);

}  // namespace fbc
