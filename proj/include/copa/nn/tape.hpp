#pragma once

// Reverse-mode autodiff over a linear tape. Every op appends a node whose
// backward closure scatters the output gradient into its parents. Backward
// walks the tape once in reverse, so each node's closure runs after all of
// its consumers have contributed to its gradient.

#include <functional>
#include <vector>

#include "copa/errors.hpp"
#include "copa/nn/tensor.hpp"

namespace copa::nn {

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

template <class T>
class Tape {
 public:
  Var push(Tensor<T> value, bool requires_grad, std::function<void(Tape&)> back = {}) {
    Node node;
    node.value = std::move(value);
    node.requires_grad = requires_grad;
    if (requires_grad) node.grad = Tensor<T>(node.value.shape);
    node.back = std::move(back);
    nodes_.push_back(std::move(node));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  Var constant(Tensor<T> value) { return push(std::move(value), false); }
  Var leaf(Tensor<T> value) { return push(std::move(value), true); }

  const Tensor<T>& value(Var v) const { return node(v).value; }
  Tensor<T>& grad(Var v) {
    Node& n = node(v);
    if (!n.requires_grad) throw UsageError("tape: gradient of a non-differentiable node");
    return n.grad;
  }
  bool requires_grad(Var v) const { return node(v).requires_grad; }

  // Gradient buffer of v, or nullptr when v does not need one. Backward
  // closures use this to skip whole scatter loops.
  Tensor<T>* maybe_grad(Var v) {
    Node& n = node(v);
    return n.requires_grad ? &n.grad : nullptr;
  }

  // Adds g into v's gradient if v participates in differentiation.
  void accumulate(Var v, std::size_t index, T g) {
    Node& n = node(v);
    if (n.requires_grad) n.grad.data[index] += g;
  }

  // Seeds d(loss)/d(loss) = 1 and runs the whole tape backward.
  void backward(Var loss) {
    Node& ln = node(loss);
    if (ln.value.size() != 1) throw UsageError("tape: backward requires a scalar loss");
    if (!ln.requires_grad) throw UsageError("tape: loss does not depend on any parameter");
    ln.grad.data[0] = T(1);
    for (int i = loss.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.requires_grad && n.back) n.back(*this);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    std::function<void(Tape&)> back;
  };

  Node& node(Var v) { return nodes_.at(static_cast<std::size_t>(v.id)); }
  const Node& node(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)); }

  std::vector<Node> nodes_;
};

}  // namespace copa::nn
