#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "nn/tensor.hpp"

namespace daufi::nn {

// One node of the dynamic computation tape. Leaves are parameters or inputs;
// interior nodes carry a backward closure that scatters this node's gradient
// into its inputs' gradients.
class Node {
 public:
  Tensor value;
  Tensor grad;  // allocated lazily by backward()
  bool requires_grad = false;
  std::string name;  // set for parameters only
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.empty()) grad = Tensor::zeros(value.shape());
  }
  void zero_grad() {
    if (!grad.empty()) grad.fill(0.0);
  }
};

using NodeRef = std::shared_ptr<Node>;

// Lightweight handle for composing ops.
struct Var {
  NodeRef node;

  Var() = default;
  explicit Var(NodeRef n) : node(std::move(n)) {}

  const Tensor& value() const { return node->value; }
  Tensor& value() { return node->value; }
  const Shape& shape() const { return node->value.shape(); }
  bool defined() const { return node != nullptr; }
};

// Wraps a tensor as a leaf. requires_grad=true makes backward() accumulate
// into it (used for parameters and for gradient checks against inputs).
inline Var make_leaf(Tensor t, bool requires_grad = false,
                     std::string name = {}) {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  n->requires_grad = requires_grad;
  n->name = std::move(name);
  return Var(n);
}

inline Var constant(Tensor t) { return make_leaf(std::move(t), false); }

// Reverse-mode sweep from a scalar root. Seeds the root gradient with 1 and
// walks the tape in reverse topological order.
void backward(const Var& root);

}  // namespace daufi::nn
