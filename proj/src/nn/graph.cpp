#include "nn/graph.hpp"

#include <stdexcept>
#include <unordered_set>

namespace daufi::nn {

namespace {

void topo_visit(const NodeRef& n, std::unordered_set<Node*>& seen,
                std::vector<NodeRef>& order) {
  // Iterative DFS; graphs can be deep (full U-Net tape).
  struct Frame {
    NodeRef node;
    std::size_t next_input = 0;
  };
  std::vector<Frame> stack;
  if (seen.insert(n.get()).second) stack.push_back({n});
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_input < f.node->inputs.size()) {
      NodeRef child = f.node->inputs[f.next_input++];
      if (child->requires_grad && seen.insert(child.get()).second)
        stack.push_back({child});
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }
}

}  // namespace

void backward(const Var& root) {
  if (!root.defined()) throw std::invalid_argument("backward: empty var");
  if (root.value().size() != 1)
    throw std::invalid_argument("backward: root must be scalar, got " +
                                root.shape().str());
  if (!root.node->requires_grad) return;

  std::unordered_set<Node*> seen;
  std::vector<NodeRef> order;
  topo_visit(root.node, seen, order);

  for (const NodeRef& n : order) n->ensure_grad();
  root.node->grad[0] += 1.0;

  // `order` ends with the root; sweep in reverse topological order.
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node& n = **it;
    if (n.backward_fn) n.backward_fn(n);
  }
}

}  // namespace daufi::nn
