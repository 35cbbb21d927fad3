#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "stsn/errors.hpp"
#include "stsn/tensor.hpp"

namespace stsn {

template <typename Scalar>
class Tape;

/**
 * Handle to a node on a Tape. Cheap to copy; does not own anything.
 * All differentiable computation is expressed as free functions over Var
 * (see ops.hpp) that append nodes to the owning tape.
 */
template <typename Scalar>
struct Var {
  Tape<Scalar>* tape = nullptr;
  int64_t idx = -1;

  bool valid() const { return tape != nullptr && idx >= 0; }
  const Tensor<Scalar>& val() const { return tape->value(idx); }
  const Tensor<Scalar>& grad() const { return tape->grad(idx); }
  const Shape& shape() const { return val().shape(); }
  int64_t rank() const { return val().rank(); }
  int64_t dim(int64_t i) const { return val().dim(i); }
  int64_t numel() const { return val().numel(); }
  bool needs_grad() const { return tape->needs_grad(idx); }
};

/**
 * Arena-allocated reverse-mode tape. Nodes are stored in creation order;
 * the backward pass walks them in descending creation index, so every node's
 * adjoint is complete before its backward function fires, and gradient
 * fan-in accumulates in a fixed, reproducible order.
 *
 * A tape lives for one forward/backward pair and is then discarded.
 */
template <typename Scalar>
class Tape {
 public:
  using BackFn = std::function<void(Tape&)>;

  struct Node {
    Tensor<Scalar> value;
    Tensor<Scalar> grad;  // zero-initialized iff needs_grad
    BackFn backward;      // empty for leaves and grad-free nodes
    bool needs_grad = false;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  int64_t size() const { return static_cast<int64_t>(nodes_.size()); }

  /// Input node. Parameters pass needs_grad=true, data tensors false.
  Var<Scalar> leaf(Tensor<Scalar> v, bool needs_grad = false) {
    Node n;
    n.value = std::move(v);
    n.needs_grad = needs_grad;
    if (needs_grad) n.grad = Tensor<Scalar>::zeros(n.value.shape());
    nodes_.push_back(std::move(n));
    return Var<Scalar>{this, size() - 1};
  }

  Var<Scalar> constant(Tensor<Scalar> v) { return leaf(std::move(v), false); }
  Var<Scalar> constant(Scalar v) { return leaf(Tensor<Scalar>::scalar(v), false); }

  /**
   * Interior node. `needs_grad` should be the OR over the inputs; when it is
   * false the backward closure is dropped and no gradient buffer exists.
   */
  Var<Scalar> make(Tensor<Scalar> v, bool needs_grad, BackFn fn) {
    Node n;
    n.value = std::move(v);
    n.needs_grad = needs_grad;
    if (needs_grad) {
      n.grad = Tensor<Scalar>::zeros(n.value.shape());
      n.backward = std::move(fn);
    }
    nodes_.push_back(std::move(n));
    return Var<Scalar>{this, size() - 1};
  }

  const Tensor<Scalar>& value(int64_t i) const { return at(i).value; }
  const Tensor<Scalar>& grad(int64_t i) const {
    const Node& n = at(i);
    if (!n.needs_grad) throw contract_error("gradient requested for a node that does not need it");
    return n.grad;
  }
  bool needs_grad(int64_t i) const { return at(i).needs_grad; }

  /// True when a backward fn should bother producing this input's adjoint.
  bool wants_grad(int64_t i) const { return at(i).needs_grad; }

  /// Accumulation buffer for node i. Marks the node as reached so its own
  /// backward fn runs in turn. Callers add into the returned tensor.
  Tensor<Scalar>& grad_acc(int64_t i) {
    Node& n = at(i);
    if (!n.needs_grad) throw contract_error("gradient accumulation into a grad-free node");
    touched_[static_cast<size_t>(i)] = 1;
    return n.grad;
  }

  void accumulate(int64_t i, const Tensor<Scalar>& g) {
    Tensor<Scalar>& buf = grad_acc(i);
    if (!buf.same_shape(g))
      throw shape_error("gradient shape " + shape_str(g.shape()) + " vs value " +
                        shape_str(buf.shape()));
    buf.arr() += g.arr();
  }

  /**
   * Reverse pass from a scalar output: seeds d(out)/d(out) = 1 and walks the
   * tape from `out` down to node 0. Only nodes actually reached through the
   * graph fire their backward functions.
   */
  void backward(const Var<Scalar>& out) {
    if (out.tape != this) throw contract_error("backward on a foreign tape");
    Node& o = at(out.idx);
    if (o.value.rank() != 0)
      throw contract_error("backward requires a scalar output, got shape " +
                           shape_str(o.value.shape()));
    if (!o.needs_grad)
      throw contract_error("backward on an output with no gradient path to any parameter");
    touched_.assign(nodes_.size(), 0);
    touched_[static_cast<size_t>(out.idx)] = 1;
    o.grad[0] = Scalar(1);
    for (int64_t i = out.idx; i >= 0; --i) {
      Node& n = nodes_[static_cast<size_t>(i)];
      if (touched_[static_cast<size_t>(i)] && n.backward) n.backward(*this);
    }
  }

 private:
  Node& at(int64_t i) {
    if (i < 0 || i >= size()) throw contract_error("tape index out of range");
    return nodes_[static_cast<size_t>(i)];
  }
  const Node& at(int64_t i) const {
    if (i < 0 || i >= size()) throw contract_error("tape index out of range");
    return nodes_[static_cast<size_t>(i)];
  }

  std::vector<Node> nodes_;
  std::vector<uint8_t> touched_;
};

}  // namespace stsn
