#pragma once
// Reverse-mode autodiff tape. Each op appends a node holding its output value
// and a closure that pulls the node's gradient and accumulates into its
// inputs' gradients. backward() walks the tape in reverse; nodes created from
// external parameters additionally flush their gradient into the caller's
// gradient buffer so parameters can live outside the tape across steps.

#include <functional>
#include <vector>

#include "bandforge/nn/tensor.hpp"

namespace bandforge::nn {

template <typename T>
class Tape {
 public:
  struct Node {
    Tensor<T> val;
    Tensor<T> grad;  // sized on first touch
    std::function<void(Tape&, int)> back;
    bool ng = false;            // participates in backprop
    Tensor<T>* grad_sink = nullptr;
  };

  std::vector<Node> nodes;

  int add(Tensor<T> val, bool ng,
          std::function<void(Tape&, int)> back = nullptr) {
    nodes.push_back(Node{std::move(val), {}, std::move(back), ng, nullptr});
    return int(nodes.size()) - 1;
  }

  // Constant (no gradient tracking).
  int constant(Tensor<T> t) { return add(std::move(t), false); }

  // Leaf copied from an external parameter; after backward() its gradient is
  // accumulated into *gsink (same shape as w). gsink == nullptr makes a
  // frozen parameter: values participate, no gradient is produced for it.
  int param(const Tensor<T>& w, Tensor<T>* gsink) {
    int id = add(w, gsink != nullptr);
    nodes[std::size_t(id)].grad_sink = gsink;
    return id;
  }

  Tensor<T>& val(int i) { return nodes[std::size_t(i)].val; }
  const Tensor<T>& val(int i) const { return nodes[std::size_t(i)].val; }

  // Gradient buffer of node i, allocated as zeros on first access.
  Tensor<T>& grad(int i) {
    Node& n = nodes[std::size_t(i)];
    if (n.grad.v.empty() && !n.val.v.empty()) n.grad = Tensor<T>(n.val.shape);
    return n.grad;
  }

  bool needs_grad(int i) const { return nodes[std::size_t(i)].ng; }

  // Reverse sweep from a scalar root (shape [1]).
  void backward(int root) {
    if (val(root).numel() != 1)
      throw ValidationError("backward: root must be a scalar");
    grad(root).v[0] = T(1);
    for (int i = root; i >= 0; --i) {
      Node& n = nodes[std::size_t(i)];
      if (!n.ng) continue;
      if (n.back) n.back(*this, i);
      if (n.grad_sink) {
        Tensor<T>& g = grad(i);
        for (std::size_t j = 0; j < g.numel(); ++j)
          n.grad_sink->v[j] += g.v[j];
      }
    }
  }

  void clear() { nodes.clear(); }
  std::size_t size() const { return nodes.size(); }
};

// True when any input id requires gradients (drives op-level ng flags).
template <typename T>
bool any_grad(const Tape<T>& t, std::initializer_list<int> ids) {
  for (int i : ids)
    if (i >= 0 && t.needs_grad(i)) return true;
  return false;
}

}  // namespace bandforge::nn
