#include "expert/autograd.hpp"

#include <unordered_set>

#include "expert/errors.hpp"

namespace expert {

namespace {
thread_local int no_grad_depth = 0;
}

bool grad_enabled() { return no_grad_depth == 0; }

NoGradGuard::NoGradGuard() { ++no_grad_depth; }
NoGradGuard::~NoGradGuard() { --no_grad_depth; }

Var Var::constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return Var(std::move(n));
}

Var Var::leaf(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  n->needs_grad = requires_grad;
  return Var(std::move(n));
}

Var make_op(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  if (grad_enabled()) {
    bool needs = false;
    for (const Var& v : inputs) needs = needs || (v.defined() && v.needs_grad());
    if (needs) {
      n->needs_grad = true;
      n->inputs.reserve(inputs.size());
      for (const Var& v : inputs) n->inputs.push_back(v.node());
      n->backward = std::move(backward);
    }
  }
  return Var(std::move(n));
}

void accumulate_grad(Node& n, const Tensor& g) {
  if (!n.needs_grad) return;
  if (!n.grad.defined()) {
    n.grad = Tensor::zeros(n.value.shape());
  }
  const std::int64_t count = n.grad.numel();
  double* dst = n.grad.data();
  const double* src = g.data();
  for (std::int64_t i = 0; i < count; ++i) dst[i] += src[i];
}

void backward(const Var& root) {
  if (!root.defined()) {
    throw ShapeError("backward: undefined root");
  }
  if (root.value().numel() != 1) {
    throw ShapeError("backward: root must be scalar, got shape " + root.value().shape_str());
  }
  if (!root.needs_grad()) {
    return;  // nothing reachable requires gradients
  }

  // Iterative post-order DFS: children (inputs) first, node afterwards.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next_child] = stack.back();
    if (next_child < node->inputs.size()) {
      Node* child = node->inputs[next_child++].get();
      if (child->needs_grad && !visited.count(child)) {
        visited.insert(child);
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad = Tensor::full(root.value().shape(), 1.0);
  // Reverse post-order = topological order from root toward leaves, so every
  // node's gradient is complete before its backward closure runs.
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && node->grad.defined()) {
      node->backward(*node);
    }
  }
}

}  // namespace expert
