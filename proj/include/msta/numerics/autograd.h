#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "msta/numerics/tensor.h"

namespace msta {

// One value in the computation graph. Leaves that require gradients are
// parameters; interior nodes carry a closure that pushes their gradient to
// their inputs.
struct Node {
  Tensor value;
  Tensor grad;
  bool has_grad = false;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  // Zero-initialised on first use.
  Tensor& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }

  // Gradient accumulated by backward(); zeros if none has arrived.
  Tensor grad() const;
  bool has_grad() const { return node_->has_grad; }
  void zero_grad();

  Node& node() const { return *node_; }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Builds an interior node. Inputs and the closure are only retained when at
// least one input requires a gradient.
Var make_node(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward);

// Reverse-mode sweep from a scalar root; gradients accumulate into every
// reachable node that requires them.
void backward(const Var& root);

}  // namespace msta
