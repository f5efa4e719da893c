// Copyright 2026 the effcrn authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <functional>
#include <unordered_map>
#include <utility>
#include <vector>

#include "effcrn/tensor.hpp"

namespace effcrn {

template <typename T>
class TapeT;

// A value that may be tracked on a tape. tape == nullptr means constant:
// operations on constants run forward-only and record nothing.
template <typename T>
struct VarT {
  TensorT<T> value;
  TapeT<T>* tape = nullptr;
  int node = -1;

  VarT() = default;
  explicit VarT(TensorT<T> v) : value(std::move(v)) {}
  VarT(TensorT<T> v, TapeT<T>* t, int n) : value(std::move(v)), tape(t), node(n) {}

  bool tracked() const { return tape != nullptr && node >= 0; }
  const Shape& shape() const { return value.shape(); }
};

using Var = VarT<float>;

// Reverse-mode tape. Operations append nodes in execution order, which is a
// topological order by construction; backward() replays the nodes once in
// reverse. One tape covers one training step and is then discarded.
template <typename T>
class TapeT {
 public:
  // self_grad is the gradient of the loss w.r.t. this node's output.
  using BackwardFn = std::function<void(TapeT<T>&, const TensorT<T>& self_grad)>;

  VarT<T> leaf(TensorT<T> value) {
    int id = push_node(value, nullptr);
    return VarT<T>(std::move(value), this, id);
  }

  // Watch a parameter. Watching the same parameter twice yields the same node,
  // so gradients from all uses accumulate.
  VarT<T> param(ParameterT<T>& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return VarT<T>(p.value, this, it->second);
    int id = push_node(p.value, nullptr);
    param_nodes_.emplace(&p, id);
    param_of_node_[id] = &p;
    return VarT<T>(p.value, this, id);
  }

  VarT<T> record(TensorT<T> value, BackwardFn fn) {
    int id = push_node(value, std::move(fn));
    return VarT<T>(std::move(value), this, id);
  }

  // Gradient buffer for a node, allocated as zeros on first touch.
  TensorT<T>& grad_mut(int node, const Shape& shape) {
    auto& g = nodes_[static_cast<size_t>(node)].grad;
    if (!g.defined()) g = TensorT<T>::zeros(shape);
    return g;
  }

  const TensorT<T>& grad(int node) const {
    return nodes_[static_cast<size_t>(node)].grad;
  }

  size_t size() const { return nodes_.size(); }

  // Backpropagate from a scalar loss. Parameter gradients accumulate into
  // ParameterT::grad; leaf/input gradients stay readable via grad().
  void backward(const VarT<T>& loss) {
    EFFCRN_CHECK(loss.tape == this && loss.node >= 0, UsageError,
                 "loss is not recorded on this tape");
    EFFCRN_CHECK(loss.value.numel() == 1, UsageError,
                 "backward requires a scalar loss, got " +
                     shape_str(loss.value.shape()));
    grad_mut(loss.node, loss.value.shape()).data()[0] = T(1);
    for (int id = loss.node; id >= 0; --id) {
      Node& n = nodes_[static_cast<size_t>(id)];
      if (!n.grad.defined() || !n.backward) continue;
      n.backward(*this, n.grad);
    }
    for (auto& [id, p] : param_of_node_) {
      const TensorT<T>& g = nodes_[static_cast<size_t>(id)].grad;
      if (!g.defined()) continue;  // unreachable parameter keeps zero grad
      T* acc = p->grad.data();
      const T* src = g.data();
      for (std::int64_t i = 0; i < g.numel(); ++i) acc[i] += src[i];
    }
  }

 private:
  struct Node {
    TensorT<T> value;
    TensorT<T> grad;
    BackwardFn backward;
  };

  int push_node(const TensorT<T>& value, BackwardFn fn) {
    nodes_.push_back(Node{value, TensorT<T>(), std::move(fn)});
    return static_cast<int>(nodes_.size()) - 1;
  }

  std::vector<Node> nodes_;
  std::unordered_map<const ParameterT<T>*, int> param_nodes_;
  std::unordered_map<int, ParameterT<T>*> param_of_node_;
};

using Tape = TapeT<float>;

// Resolves the tape shared by a set of operands (all tracked operands must
// live on one tape; constants mix freely).
template <typename T>
TapeT<T>* joint_tape(std::initializer_list<const VarT<T>*> vars) {
  TapeT<T>* tape = nullptr;
  for (const VarT<T>* v : vars) {
    if (!v->tracked()) continue;
    EFFCRN_CHECK(tape == nullptr || tape == v->tape, UsageError,
                 "operands recorded on different tapes");
    tape = v->tape;
  }
  return tape;
}

}  // namespace effcrn
