#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "expert/tensor.hpp"

namespace expert {

// Reverse-mode autodiff over a dynamically built DAG of Nodes.
//
// Every op produces a fresh Node holding the forward value plus a backward
// closure that scatters the node's gradient into its inputs. Gradients are
// only materialized for nodes on a path from a requires_grad leaf to the
// backward root; everything else is pruned at op-construction time.

struct Node {
  Tensor value;
  Tensor grad;  // allocated lazily during backward
  bool requires_grad = false;  // true only on leaves marked trainable
  bool needs_grad = false;     // some requires_grad leaf feeds this node
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;  // reads this->grad, writes inputs' grads

  bool has_grad() const { return grad.defined(); }
};

using NodePtr = std::shared_ptr<Node>;

// Value handle used by all ops. Copying a Var aliases the same node.
class Var {
public:
  Var() = default;
  explicit Var(NodePtr n) : node_(std::move(n)) {}

  // A leaf that never receives gradients (inputs, ground truth).
  static Var constant(Tensor value);
  // A leaf that accumulates gradients during backward (parameters).
  static Var leaf(Tensor value, bool requires_grad);

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  // In-place mutation of a leaf's storage (optimizer updates).
  Tensor& mutable_value() { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  bool has_grad() const { return node_ && node_->grad.defined(); }
  bool needs_grad() const { return node_ && node_->needs_grad; }
  void clear_grad() { node_->grad = Tensor(); }

  const NodePtr& node() const { return node_; }

private:
  NodePtr node_;
};

// True while graph recording is enabled for this thread. Evaluation wraps
// forward passes in NoGradGuard, so ops emit constant nodes with no edges.
bool grad_enabled();

class NoGradGuard {
public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// Shared helper used by every op: builds the result node, wires edges, and
// drops the backward closure when no input needs gradients.
Var make_op(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward);

// Adds g into n's gradient buffer (allocating on first touch). No-op when
// the node does not need gradients.
void accumulate_grad(Node& n, const Tensor& g);

// Runs backward from a scalar root, accumulating into requires_grad leaves.
void backward(const Var& root);

}  // namespace expert
