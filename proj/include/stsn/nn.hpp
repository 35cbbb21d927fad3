#pragma once

#include <string>

#include "stsn/ops.hpp"
#include "stsn/tape.hpp"
#include "stsn/tensor.hpp"

/**
 * Neural-net building blocks composed from the differentiable primitives in
 * ops.hpp. Everything here is a composite: backward falls out of the tape.
 */
namespace stsn {

/// y = x W^T + b for x[*, In], W[Out, In], b[Out]. Leading axes pass through.
template <typename Scalar>
Var<Scalar> linear(Var<Scalar> x, Var<Scalar> w, Var<Scalar> b) {
  int64_t in = x.dim(-1);
  if (w.rank() != 2 || w.dim(1) != in)
    throw shape_error("linear weight " + shape_str(w.shape()) + " against input " +
                      shape_str(x.shape()));
  Shape out_shape = x.shape();
  out_shape.back() = w.dim(0);
  int64_t rows = x.numel() / in;
  Var<Scalar> y = matmul(reshape(x, {rows, in}), w, false, true);
  y = add(y, b);
  return reshape(y, out_shape);
}

template <typename Scalar>
Var<Scalar> linear(Var<Scalar> x, Var<Scalar> w) {
  int64_t in = x.dim(-1);
  if (w.rank() != 2 || w.dim(1) != in)
    throw shape_error("linear weight " + shape_str(w.shape()) + " against input " +
                      shape_str(x.shape()));
  Shape out_shape = x.shape();
  out_shape.back() = w.dim(0);
  int64_t rows = x.numel() / in;
  return reshape(matmul(reshape(x, {rows, in}), w, false, true), out_shape);
}

/// (x - mean) / sqrt(var + eps) along `axis`, population statistics.
template <typename Scalar>
Var<Scalar> moment_normalize(Var<Scalar> x, int64_t axis, Scalar eps) {
  Var<Scalar> m = mean(x, axis, true);
  Var<Scalar> c = sub(x, m);
  Var<Scalar> v = mean(square(c), axis, true);
  return mul(c, rsqrt(add_scalar(v, eps)));
}

/**
 * Layer normalization over the last axis with learned per-feature gain and
 * shift (both of width dim(-1)).
 */
template <typename Scalar>
Var<Scalar> layer_norm(Var<Scalar> x, Var<Scalar> gain, Var<Scalar> shift,
                       Scalar eps = Scalar(1e-5)) {
  int64_t dim = x.dim(-1);
  if (gain.shape() != Shape{dim} || shift.shape() != Shape{dim})
    throw shape_error("layer_norm gain/shift must be [" + std::to_string(dim) + "], got " +
                      shape_str(gain.shape()) + " and " + shape_str(shift.shape()));
  return add(mul(moment_normalize(x, -1, eps), gain), shift);
}

/**
 * Temporal context normalization: each feature dimension is standardized over
 * the context sequence (axis `axis`, extent M >= 2), then scaled/shifted by a
 * learned per-feature gain/shift of width dim(-1).
 */
template <typename Scalar>
Var<Scalar> tcn(Var<Scalar> seq, Var<Scalar> gain, Var<Scalar> shift, int64_t axis = 0,
                Scalar eps = Scalar(1e-8)) {
  int64_t m = seq.dim(axis);
  if (m < 2)
    throw contract_error("temporal context normalization needs a sequence of at least 2, got " +
                         std::to_string(m));
  int64_t dim = seq.dim(-1);
  if (gain.shape() != Shape{dim} || shift.shape() != Shape{dim})
    throw shape_error("tcn gain/shift must be [" + std::to_string(dim) + "], got " +
                      shape_str(gain.shape()) + " and " + shape_str(shift.shape()));
  return add(mul(moment_normalize(seq, axis, eps), gain), shift);
}

/**
 * One GRU step. State h and input u are [B, D]; weights are packed with gate
 * order (reset, update, candidate): w_ih/w_hh are [3D, D], biases [3D].
 *
 *   r = sigmoid(W_ir u + b_ir + W_hr h + b_hr)
 *   z = sigmoid(W_iz u + b_iz + W_hz h + b_hz)
 *   n = tanh(W_in u + b_in + r ⊙ (W_hn h + b_hn))
 *   h' = (1 - z) ⊙ n + z ⊙ h
 *
 * A saturated update gate z→1 therefore preserves the previous state.
 */
template <typename Scalar>
Var<Scalar> gru_cell(Var<Scalar> h, Var<Scalar> u, Var<Scalar> w_ih, Var<Scalar> w_hh,
                     Var<Scalar> b_ih, Var<Scalar> b_hh) {
  if (h.rank() != 2 || u.rank() != 2 || h.dim(1) != u.dim(1) || h.dim(0) != u.dim(0))
    throw shape_error("gru_cell state " + shape_str(h.shape()) + " vs input " +
                      shape_str(u.shape()));
  int64_t d = h.dim(1);
  if (w_ih.shape() != Shape{3 * d, d} || w_hh.shape() != Shape{3 * d, d} ||
      b_ih.shape() != Shape{3 * d} || b_hh.shape() != Shape{3 * d})
    throw shape_error("gru_cell parameter shapes do not match width " + std::to_string(d));
  Var<Scalar> gi = linear(u, w_ih, b_ih);  // [B, 3D]
  Var<Scalar> gh = linear(h, w_hh, b_hh);
  Var<Scalar> r = sigmoid(add(slice(gi, 1, 0, d), slice(gh, 1, 0, d)));
  Var<Scalar> z = sigmoid(add(slice(gi, 1, d, d), slice(gh, 1, d, d)));
  Var<Scalar> n = tanh(add(slice(gi, 1, 2 * d, d), mul(r, slice(gh, 1, 2 * d, d))));
  Var<Scalar> one_minus_z = add_scalar(neg(z), Scalar(1));
  return add(mul(one_minus_z, n), mul(z, h));
}

/// Mean squared error over all elements of two same-shaped tensors.
template <typename Scalar>
Var<Scalar> mse(Var<Scalar> a, Var<Scalar> b) {
  if (a.shape() != b.shape())
    throw shape_error("mse shapes " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  return mean(square(sub(a, b)));
}

}  // namespace stsn
