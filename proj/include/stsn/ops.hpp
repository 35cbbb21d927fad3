#pragma once

#include <algorithm>
#include <type_traits>
#include <cmath>
#include <cstdint>
#include <vector>

#include "stsn/rng.hpp"
#include "stsn/tape.hpp"
#include "stsn/tensor.hpp"

/**
 * Differentiable op library over Tape/Var. Everything is a free function;
 * each op appends one node whose backward closure accumulates adjoints into
 * its inputs via Tape::grad_acc. Elementwise binaries broadcast with
 * right-aligned NumPy semantics.
 */
namespace stsn {

// ---------------------------------------------------------------------------
// broadcast machinery (tensor level, reused by forward and backward passes)
// ---------------------------------------------------------------------------

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (size_t i = 0; i < r; ++i) {
    int64_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    int64_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1)
      throw shape_error("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    out[i] = std::max(da, db);
  }
  return out;
}

/// Strides for reading a tensor of shape `s` while iterating over `out`
/// (right-aligned; 0 on broadcast axes). `s` must be broadcastable to `out`.
inline std::vector<int64_t> bcast_strides(const Shape& s, const Shape& out) {
  std::vector<int64_t> st(out.size(), 0);
  Shape ss = row_major_strides(s);
  size_t off = out.size() - s.size();
  for (size_t i = 0; i < s.size(); ++i) {
    if (s[i] == out[off + i])
      st[off + i] = ss[i];
    else if (s[i] != 1)
      throw shape_error("cannot broadcast " + shape_str(s) + " to " + shape_str(out));
  }
  return st;
}

namespace detail {

/// Odometer walk over `out`, yielding flat offsets into two broadcast inputs.
template <typename Scalar, typename F>
void bcast_loop2(const Shape& out, const std::vector<int64_t>& sa, const std::vector<int64_t>& sb,
                 F&& f) {
  int64_t n = shape_numel(out);
  size_t r = out.size();
  if (r == 0 || n == 0) {
    if (n == 1) f(int64_t(0), int64_t(0), int64_t(0));
    return;
  }
  std::vector<int64_t> ix(r, 0);
  int64_t oa = 0, ob = 0;
  for (int64_t flat = 0; flat < n; ++flat) {
    f(flat, oa, ob);
    for (size_t d = r; d-- > 0;) {
      ix[d]++;
      oa += sa[d];
      ob += sb[d];
      if (ix[d] < out[d]) break;
      ix[d] = 0;
      oa -= sa[d] * out[d];
      ob -= sb[d] * out[d];
    }
  }
}

/// Right-aligned: true when `small` equals the trailing dims of `out`
/// (leading-axis broadcast; the small operand tiles as a contiguous block).
inline bool is_trailing_block(const Shape& small, const Shape& out) {
  if (small.size() > out.size()) return false;
  size_t off = out.size() - small.size();
  for (size_t i = 0; i < small.size(); ++i)
    if (small[i] != out[off + i]) return false;
  return true;
}

/// True when `small` matches `out` with its last `k` axes collapsed to 1
/// (keepdim-style broadcast; the small operand gives one value per row).
inline bool is_row_scalar(const Shape& small, const Shape& out, int64_t& inner) {
  if (small.size() != out.size() || small.empty()) return false;
  size_t split = small.size();
  while (split > 0 && small[split - 1] == 1 && out[split - 1] != 1) --split;
  if (split == small.size()) return false;
  for (size_t i = 0; i < split; ++i)
    if (small[i] != out[i]) return false;
  inner = 1;
  for (size_t i = split; i < out.size(); ++i) inner *= out[i];
  return true;
}

/**
 * out[i] = f(a[ia], b[ib]) with broadcasting. Fast paths cover same-shape,
 * tiled-block, and per-row-scalar operands; anything else takes the odometer.
 */
template <typename Scalar, typename F>
Tensor<Scalar> bcast_apply(const Tensor<Scalar>& a, const Tensor<Scalar>& b, F&& f) {
  if (a.same_shape(b)) {
    Tensor<Scalar> out(a.shape());
    const Scalar* pa = a.data();
    const Scalar* pb = b.data();
    Scalar* po = out.data();
    int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) po[i] = f(pa[i], pb[i]);
    return out;
  }
  Shape os = broadcast_shape(a.shape(), b.shape());
  Tensor<Scalar> out(os);
  int64_t n = out.numel();
  Scalar* po = out.data();
  const Scalar* pa = a.data();
  const Scalar* pb = b.data();
  int64_t inner = 0;
  if (b.numel() == 1) {
    Scalar bv = pb[0];
    for (int64_t i = 0; i < n; ++i) po[i] = f(pa[i], bv);
  } else if (a.numel() == 1) {
    Scalar av = pa[0];
    for (int64_t i = 0; i < n; ++i) po[i] = f(av, pb[i]);
  } else if (a.shape() == os && is_trailing_block(b.shape(), os)) {
    int64_t nb = b.numel();
    for (int64_t i = 0; i < n; ++i) po[i] = f(pa[i], pb[i % nb]);
  } else if (b.shape() == os && is_trailing_block(a.shape(), os)) {
    int64_t na = a.numel();
    for (int64_t i = 0; i < n; ++i) po[i] = f(pa[i % na], pb[i]);
  } else if (a.shape() == os && is_row_scalar(b.shape(), os, inner)) {
    for (int64_t i = 0; i < n; ++i) po[i] = f(pa[i], pb[i / inner]);
  } else if (b.shape() == os && is_row_scalar(a.shape(), os, inner)) {
    for (int64_t i = 0; i < n; ++i) po[i] = f(pa[i / inner], pb[i]);
  } else {
    auto sa = bcast_strides(a.shape(), os);
    auto sb = bcast_strides(b.shape(), os);
    bcast_loop2<Scalar>(os, sa, sb,
                        [&](int64_t flat, int64_t oa, int64_t ob) { po[flat] = f(pa[oa], pb[ob]); });
  }
  return out;
}

}  // namespace detail

/// Sum `g` down to `target` shape (inverse of broadcasting in backward passes).
template <typename Scalar>
Tensor<Scalar> reduce_to_shape(const Tensor<Scalar>& g, const Shape& target) {
  if (g.shape() == target) return g;
  Tensor<Scalar> out(target);
  Scalar* po = out.data();
  const Scalar* pg = g.data();
  int64_t n = g.numel();
  int64_t inner = 0;
  if (out.numel() == 1) {
    Scalar acc(0);
    for (int64_t i = 0; i < n; ++i) acc += pg[i];
    po[0] = acc;
    return out;
  }
  if (detail::is_trailing_block(target, g.shape())) {
    int64_t nt = out.numel();
    for (int64_t i = 0; i < n; ++i) po[i % nt] += pg[i];
    return out;
  }
  if (detail::is_row_scalar(target, g.shape(), inner)) {
    for (int64_t i = 0; i < n; ++i) po[i / inner] += pg[i];
    return out;
  }
  auto st = bcast_strides(target, g.shape());
  auto sz = bcast_strides(g.shape(), g.shape());
  detail::bcast_loop2<Scalar>(g.shape(), st, sz,
                              [&](int64_t, int64_t ot, int64_t og) { po[ot] += pg[og]; });
  return out;
}

// ---------------------------------------------------------------------------
// elementwise binary ops
// ---------------------------------------------------------------------------

namespace detail {

template <typename Scalar>
void check_same_tape(const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.tape != b.tape) throw contract_error("operands live on different tapes");
}

}  // namespace detail

template <typename Scalar>
Var<Scalar> add(Var<Scalar> a, Var<Scalar> b) {
  detail::check_same_tape(a, b);
  Tape<Scalar>& t = *a.tape;
  Tensor<Scalar> out =
      detail::bcast_apply(a.val(), b.val(), [](Scalar x, Scalar y) { return x + y; });
  bool ng = a.needs_grad() || b.needs_grad();
  int64_t ia = a.idx, ib = b.idx;
  Var<Scalar> o{&t, t.size()};
  t.make(std::move(out), ng, [ia, ib, o](Tape<Scalar>& tp) {
    const Tensor<Scalar>& g = tp.grad(o.idx);
    if (tp.wants_grad(ia)) tp.accumulate(ia, reduce_to_shape(g, tp.value(ia).shape()));
    if (tp.wants_grad(ib)) tp.accumulate(ib, reduce_to_shape(g, tp.value(ib).shape()));
  });
  return o;
}

template <typename Scalar>
Var<Scalar> sub(Var<Scalar> a, Var<Scalar> b) {
  detail::check_same_tape(a, b);
  Tape<Scalar>& t = *a.tape;
  Tensor<Scalar> out =
      detail::bcast_apply(a.val(), b.val(), [](Scalar x, Scalar y) { return x - y; });
  bool ng = a.needs_grad() || b.needs_grad();
  int64_t ia = a.idx, ib = b.idx;
  Var<Scalar> o{&t, t.size()};
  t.make(std::move(out), ng, [ia, ib, o](Tape<Scalar>& tp) {
    const Tensor<Scalar>& g = tp.grad(o.idx);
    if (tp.wants_grad(ia)) tp.accumulate(ia, reduce_to_shape(g, tp.value(ia).shape()));
    if (tp.wants_grad(ib)) {
      Tensor<Scalar> neg(g.shape());
      neg.arr() = -g.arr();
      tp.accumulate(ib, reduce_to_shape(neg, tp.value(ib).shape()));
    }
  });
  return o;
}

template <typename Scalar>
Var<Scalar> mul(Var<Scalar> a, Var<Scalar> b) {
  detail::check_same_tape(a, b);
  Tape<Scalar>& t = *a.tape;
  Tensor<Scalar> out =
      detail::bcast_apply(a.val(), b.val(), [](Scalar x, Scalar y) { return x * y; });
  bool ng = a.needs_grad() || b.needs_grad();
  int64_t ia = a.idx, ib = b.idx;
  Var<Scalar> o{&t, t.size()};
  t.make(std::move(out), ng, [ia, ib, o](Tape<Scalar>& tp) {
    const Tensor<Scalar>& g = tp.grad(o.idx);
    if (tp.wants_grad(ia)) {
      Tensor<Scalar> gb =
          detail::bcast_apply(g, tp.value(ib), [](Scalar x, Scalar y) { return x * y; });
      tp.accumulate(ia, reduce_to_shape(gb, tp.value(ia).shape()));
    }
    if (tp.wants_grad(ib)) {
      Tensor<Scalar> ga =
          detail::bcast_apply(g, tp.value(ia), [](Scalar x, Scalar y) { return x * y; });
      tp.accumulate(ib, reduce_to_shape(ga, tp.value(ib).shape()));
    }
  });
  return o;
}

template <typename Scalar>
Var<Scalar> div(Var<Scalar> a, Var<Scalar> b) {
  detail::check_same_tape(a, b);
  Tape<Scalar>& t = *a.tape;
  Tensor<Scalar> out =
      detail::bcast_apply(a.val(), b.val(), [](Scalar x, Scalar y) { return x / y; });
  bool ng = a.needs_grad() || b.needs_grad();
  int64_t ia = a.idx, ib = b.idx;
  Var<Scalar> o{&t, t.size()};
  t.make(std::move(out), ng, [ia, ib, o](Tape<Scalar>& tp) {
    const Tensor<Scalar>& g = tp.grad(o.idx);
    if (tp.wants_grad(ia)) {
      Tensor<Scalar> gb =
          detail::bcast_apply(g, tp.value(ib), [](Scalar x, Scalar y) { return x / y; });
      tp.accumulate(ia, reduce_to_shape(gb, tp.value(ia).shape()));
    }
    if (tp.wants_grad(ib)) {
      // d/db (a/b) = -a/b^2 = -out/b
      Tensor<Scalar> ob =
          detail::bcast_apply(tp.value(o.idx), tp.value(ib),
                              [](Scalar ov, Scalar bv) { return -ov / bv; });
      Tensor<Scalar> gb = detail::bcast_apply(g, ob, [](Scalar x, Scalar y) { return x * y; });
      tp.accumulate(ib, reduce_to_shape(gb, tp.value(ib).shape()));
    }
  });
  return o;
}

// ---------------------------------------------------------------------------
// scalar affine (no extra graph nodes for constants)
// ---------------------------------------------------------------------------

/// y = c * x
template <typename Scalar>
Var<Scalar> scale(Var<Scalar> x, std::type_identity_t<Scalar> c) {
  Tape<Scalar>& t = *x.tape;
  Tensor<Scalar> out(x.shape());
  out.arr() = x.val().arr() * c;
  int64_t ix = x.idx;
  Var<Scalar> o{&t, t.size()};
  t.make(std::move(out), x.needs_grad(), [ix, o, c](Tape<Scalar>& tp) {
    if (tp.wants_grad(ix)) tp.grad_acc(ix).arr() += tp.grad(o.idx).arr() * c;
  });
  return o;
}

/// y = x + c
template <typename Scalar>
Var<Scalar> add_scalar(Var<Scalar> x, std::type_identity_t<Scalar> c) {
  Tape<Scalar>& t = *x.tape;
  Tensor<Scalar> out(x.shape());
  out.arr() = x.val().arr() + c;
  int64_t ix = x.idx;
  Var<Scalar> o{&t, t.size()};
  t.make(std::move(out), x.needs_grad(), [ix, o](Tape<Scalar>& tp) {
    if (tp.wants_grad(ix)) tp.grad_acc(ix).arr() += tp.grad(o.idx).arr();
  });
  return o;
}

template <typename Scalar>
Var<Scalar> neg(Var<Scalar> x) {
  return scale(x, Scalar(-1));
}

// ---------------------------------------------------------------------------
// elementwise unary ops
// ---------------------------------------------------------------------------

namespace detail {

/// FwdF: Scalar->Scalar. GradF(x, y)->dy/dx where y is the forward output.
template <typename Scalar, typename FwdF, typename GradF>
Var<Scalar> unary_op(Var<Scalar> x, FwdF fwd, GradF dfn) {
  Tape<Scalar>& t = *x.tape;
  Tensor<Scalar> out(x.shape());
  const Scalar* px = x.val().data();
  Scalar* po = out.data();
  int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = fwd(px[i]);
  int64_t ix = x.idx;
  Var<Scalar> o{&t, t.size()};
  t.make(std::move(out), x.needs_grad(), [ix, o, dfn](Tape<Scalar>& tp) {
    if (!tp.wants_grad(ix)) return;
    const Scalar* pg = tp.grad(o.idx).data();
    const Scalar* pxv = tp.value(ix).data();
    const Scalar* pov = tp.value(o.idx).data();
    Tensor<Scalar>& acc = tp.grad_acc(ix);
    Scalar* pa = acc.data();
    int64_t m = acc.numel();
    for (int64_t i = 0; i < m; ++i) pa[i] += pg[i] * dfn(pxv[i], pov[i]);
  });
  return o;
}

}  // namespace detail

template <typename Scalar>
Var<Scalar> exp(Var<Scalar> x) {
  return detail::unary_op(
      x, [](Scalar v) { return std::exp(v); }, [](Scalar, Scalar y) { return y; });
}

template <typename Scalar>
Var<Scalar> log(Var<Scalar> x) {
  return detail::unary_op(
      x, [](Scalar v) { return std::log(v); }, [](Scalar v, Scalar) { return Scalar(1) / v; });
}

template <typename Scalar>
Var<Scalar> tanh(Var<Scalar> x) {
  return detail::unary_op(
      x, [](Scalar v) { return std::tanh(v); },
      [](Scalar, Scalar y) { return Scalar(1) - y * y; });
}

template <typename Scalar>
Var<Scalar> sigmoid(Var<Scalar> x) {
  return detail::unary_op(
      x,
      [](Scalar v) {
        // branch on sign for stability at large |v|
        if (v >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-v));
        Scalar e = std::exp(v);
        return e / (Scalar(1) + e);
      },
      [](Scalar, Scalar y) { return y * (Scalar(1) - y); });
}

template <typename Scalar>
Var<Scalar> relu(Var<Scalar> x) {
  // `v <= 0 ? 0 : v` rather than `v > 0 ? v : 0`: the comparison fails for
  // NaN either way, and this form lets NaN pass through instead of silently
  // flushing it to zero, so numeric blowups stay visible in the loss.
  return detail::unary_op(
      x, [](Scalar v) { return v <= Scalar(0) ? Scalar(0) : v; },
      [](Scalar v, Scalar) { return v > Scalar(0) ? Scalar(1) : Scalar(0); });
}

template <typename Scalar>
Var<Scalar> sqrt(Var<Scalar> x) {
  return detail::unary_op(
      x, [](Scalar v) { return std::sqrt(v); },
      [](Scalar, Scalar y) { return Scalar(0.5) / y; });
}

template <typename Scalar>
Var<Scalar> rsqrt(Var<Scalar> x) {
  return detail::unary_op(
      x, [](Scalar v) { return Scalar(1) / std::sqrt(v); },
      [](Scalar v, Scalar y) { return Scalar(-0.5) * y / v; });
}

template <typename Scalar>
Var<Scalar> square(Var<Scalar> x) {
  return detail::unary_op(
      x, [](Scalar v) { return v * v; }, [](Scalar v, Scalar) { return Scalar(2) * v; });
}

// ---------------------------------------------------------------------------
// matrix products
// ---------------------------------------------------------------------------

/**
 * y = op(a) * op(b) for rank-2 operands, where op transposes when the flag is
 * set. Runs on Eigen; backward reuses the same GEMM kernels.
 */
template <typename Scalar>
Var<Scalar> matmul(Var<Scalar> a, Var<Scalar> b, bool trans_a = false, bool trans_b = false) {
  detail::check_same_tape(a, b);
  if (a.rank() != 2 || b.rank() != 2)
    throw shape_error("matmul expects rank-2 operands, got " + shape_str(a.shape()) + " and " +
                      shape_str(b.shape()));
  int64_t m = trans_a ? a.dim(1) : a.dim(0);
  int64_t ka = trans_a ? a.dim(0) : a.dim(1);
  int64_t kb = trans_b ? b.dim(1) : b.dim(0);
  int64_t n = trans_b ? b.dim(0) : b.dim(1);
  if (ka != kb)
    throw shape_error("matmul inner dims " + std::to_string(ka) + " vs " + std::to_string(kb));
  Tape<Scalar>& t = *a.tape;
  Tensor<Scalar> out({m, n});
  {
    auto A = a.val().mat();
    auto B = b.val().mat();
    auto Y = out.mat();
    if (!trans_a && !trans_b)
      Y.noalias() = A * B;
    else if (trans_a && !trans_b)
      Y.noalias() = A.transpose() * B;
    else if (!trans_a && trans_b)
      Y.noalias() = A * B.transpose();
    else
      Y.noalias() = A.transpose() * B.transpose();
  }
  bool ng = a.needs_grad() || b.needs_grad();
  int64_t ia = a.idx, ib = b.idx;
  Var<Scalar> o{&t, t.size()};
  t.make(std::move(out), ng, [ia, ib, o, trans_a, trans_b](Tape<Scalar>& tp) {
    auto G = tp.grad(o.idx).mat();
    auto A = tp.value(ia).mat();
    auto B = tp.value(ib).mat();
    if (tp.wants_grad(ia)) {
      auto GA = tp.grad_acc(ia).mat();
      if (!trans_a && !trans_b)
        GA.noalias() += G * B.transpose();
      else if (!trans_a && trans_b)
        GA.noalias() += G * B;
      else if (trans_a && !trans_b)
        GA.noalias() += B * G.transpose();
      else
        GA.noalias() += B.transpose() * G.transpose();
    }
    if (tp.wants_grad(ib)) {
      auto GB = tp.grad_acc(ib).mat();
      if (!trans_a && !trans_b)
        GB.noalias() += A.transpose() * G;
      else if (!trans_a && trans_b)
        GB.noalias() += G.transpose() * A;
      else if (trans_a && !trans_b)
        GB.noalias() += A * G;
      else
        GB.noalias() += G.transpose() * A.transpose();
    }
  });
  return o;
}

/// Batched rank-3 matmul: [B,M,K] x [B,K,N] -> [B,M,N], with transpose flags
/// applied per batch slice. Batch extents must match exactly.
template <typename Scalar>
Var<Scalar> bmm(Var<Scalar> a, Var<Scalar> b, bool trans_a = false, bool trans_b = false) {
  detail::check_same_tape(a, b);
  if (a.rank() != 3 || b.rank() != 3)
    throw shape_error("bmm expects rank-3 operands, got " + shape_str(a.shape()) + " and " +
                      shape_str(b.shape()));
  if (a.dim(0) != b.dim(0))
    throw shape_error("bmm batch dims " + std::to_string(a.dim(0)) + " vs " +
                      std::to_string(b.dim(0)));
  int64_t bsz = a.dim(0);
  int64_t m = trans_a ? a.dim(2) : a.dim(1);
  int64_t ka = trans_a ? a.dim(1) : a.dim(2);
  int64_t kb = trans_b ? b.dim(2) : b.dim(1);
  int64_t n = trans_b ? b.dim(1) : b.dim(2);
  if (ka != kb)
    throw shape_error("bmm inner dims " + std::to_string(ka) + " vs " + std::to_string(kb));
  Tape<Scalar>& t = *a.tape;
  Tensor<Scalar> out({bsz, m, n});
  using CM = typename Tensor<Scalar>::ConstMatMap;
  using MM = typename Tensor<Scalar>::MatMap;
  int64_t sa = a.dim(1) * a.dim(2), sb = b.dim(1) * b.dim(2), so = m * n;
  for (int64_t i = 0; i < bsz; ++i) {
    CM A(a.val().data() + i * sa, a.dim(1), a.dim(2));
    CM B(b.val().data() + i * sb, b.dim(1), b.dim(2));
    MM Y(out.data() + i * so, m, n);
    if (!trans_a && !trans_b)
      Y.noalias() = A * B;
    else if (trans_a && !trans_b)
      Y.noalias() = A.transpose() * B;
    else if (!trans_a && trans_b)
      Y.noalias() = A * B.transpose();
    else
      Y.noalias() = A.transpose() * B.transpose();
  }
  bool ng = a.needs_grad() || b.needs_grad();
  int64_t ia = a.idx, ib = b.idx;
  Var<Scalar> o{&t, t.size()};
  t.make(std::move(out), ng, [ia, ib, o, trans_a, trans_b, bsz, m, n, sa, sb, so](
                                 Tape<Scalar>& tp) {
    const Tensor<Scalar>& av = tp.value(ia);
    const Tensor<Scalar>& bv = tp.value(ib);
    const Tensor<Scalar>& gv = tp.grad(o.idx);
    for (int64_t i = 0; i < bsz; ++i) {
      CM A(av.data() + i * sa, av.dim(1), av.dim(2));
      CM B(bv.data() + i * sb, bv.dim(1), bv.dim(2));
      CM G(gv.data() + i * so, m, n);
      if (tp.wants_grad(ia)) {
        MM GA(tp.grad_acc(ia).data() + i * sa, av.dim(1), av.dim(2));
        if (!trans_a && !trans_b)
          GA.noalias() += G * B.transpose();
        else if (!trans_a && trans_b)
          GA.noalias() += G * B;
        else if (trans_a && !trans_b)
          GA.noalias() += B * G.transpose();
        else
          GA.noalias() += B.transpose() * G.transpose();
      }
      if (tp.wants_grad(ib)) {
        MM GB(tp.grad_acc(ib).data() + i * sb, bv.dim(1), bv.dim(2));
        if (!trans_a && !trans_b)
          GB.noalias() += A.transpose() * G;
        else if (!trans_a && trans_b)
          GB.noalias() += G.transpose() * A;
        else if (trans_a && !trans_b)
          GB.noalias() += A * G;
        else
          GB.noalias() += G.transpose() * A.transpose();
      }
    }
  });
  return o;
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

namespace detail {

/// Collapse a shape around `axis` into (outer, d, inner).
inline void axis_split(const Shape& s, int64_t axis, int64_t& outer, int64_t& d, int64_t& inner) {
  int64_t r = static_cast<int64_t>(s.size());
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw shape_error("axis out of range for " + shape_str(s));
  outer = 1;
  inner = 1;
  for (int64_t i = 0; i < axis; ++i) outer *= s[static_cast<size_t>(i)];
  d = s[static_cast<size_t>(axis)];
  for (int64_t i = axis + 1; i < r; ++i) inner *= s[static_cast<size_t>(i)];
}

inline Shape reduced_shape(const Shape& s, int64_t axis, bool keepdim) {
  int64_t r = static_cast<int64_t>(s.size());
  if (axis < 0) axis += r;
  Shape out;
  for (int64_t i = 0; i < r; ++i) {
    if (i == axis) {
      if (keepdim) out.push_back(1);
    } else {
      out.push_back(s[static_cast<size_t>(i)]);
    }
  }
  return out;
}

}  // namespace detail

/// Sum of all elements -> rank-0 scalar.
template <typename Scalar>
Var<Scalar> sum(Var<Scalar> x) {
  Tape<Scalar>& t = *x.tape;
  Scalar acc(0);
  const Scalar* px = x.val().data();
  int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) acc += px[i];
  int64_t ix = x.idx;
  Var<Scalar> o{&t, t.size()};
  t.make(Tensor<Scalar>::scalar(acc), x.needs_grad(), [ix, o](Tape<Scalar>& tp) {
    if (tp.wants_grad(ix)) tp.grad_acc(ix).arr() += tp.grad(o.idx)[0];
  });
  return o;
}

/// Sum along one axis.
template <typename Scalar>
Var<Scalar> sum(Var<Scalar> x, int64_t axis, bool keepdim = false) {
  Tape<Scalar>& t = *x.tape;
  int64_t outer, d, inner;
  detail::axis_split(x.shape(), axis, outer, d, inner);
  Tensor<Scalar> out(detail::reduced_shape(x.shape(), axis, keepdim));
  const Scalar* px = x.val().data();
  Scalar* po = out.data();
  for (int64_t ot = 0; ot < outer; ++ot)
    for (int64_t j = 0; j < d; ++j) {
      const Scalar* row = px + (ot * d + j) * inner;
      Scalar* dst = po + ot * inner;
      for (int64_t in = 0; in < inner; ++in) dst[in] += row[in];
    }
  int64_t ix = x.idx;
  Var<Scalar> o{&t, t.size()};
  t.make(std::move(out), x.needs_grad(), [ix, o, outer, d, inner](Tape<Scalar>& tp) {
    if (!tp.wants_grad(ix)) return;
    const Scalar* pg = tp.grad(o.idx).data();
    Scalar* pa = tp.grad_acc(ix).data();
    for (int64_t ot = 0; ot < outer; ++ot)
      for (int64_t j = 0; j < d; ++j) {
        Scalar* row = pa + (ot * d + j) * inner;
        const Scalar* src = pg + ot * inner;
        for (int64_t in = 0; in < inner; ++in) row[in] += src[in];
      }
  });
  return o;
}

template <typename Scalar>
Var<Scalar> mean(Var<Scalar> x) {
  return scale(sum(x), Scalar(1) / Scalar(x.numel()));
}

template <typename Scalar>
Var<Scalar> mean(Var<Scalar> x, int64_t axis, bool keepdim = false) {
  int64_t outer, d, inner;
  detail::axis_split(x.shape(), axis, outer, d, inner);
  return scale(sum(x, axis, keepdim), Scalar(1) / Scalar(d));
}

// ---------------------------------------------------------------------------
// fused stable softmax / logsumexp
// ---------------------------------------------------------------------------

/**
 * Softmax along `axis`, computed with max subtraction for stability:
 * y_i = exp(x_i - max) / sum_j exp(x_j - max).
 */
template <typename Scalar>
Var<Scalar> softmax(Var<Scalar> x, int64_t axis) {
  Tape<Scalar>& t = *x.tape;
  int64_t outer, d, inner;
  detail::axis_split(x.shape(), axis, outer, d, inner);
  if (d == 0) throw shape_error("softmax over empty axis");
  Tensor<Scalar> out(x.shape());
  const Scalar* px = x.val().data();
  Scalar* po = out.data();
  for (int64_t ot = 0; ot < outer; ++ot)
    for (int64_t in = 0; in < inner; ++in) {
      const Scalar* xr = px + ot * d * inner + in;
      Scalar* yr = po + ot * d * inner + in;
      Scalar mx = xr[0];
      for (int64_t j = 1; j < d; ++j) mx = std::max(mx, xr[j * inner]);
      Scalar z(0);
      for (int64_t j = 0; j < d; ++j) {
        Scalar e = std::exp(xr[j * inner] - mx);
        yr[j * inner] = e;
        z += e;
      }
      Scalar rz = Scalar(1) / z;
      for (int64_t j = 0; j < d; ++j) yr[j * inner] *= rz;
    }
  int64_t ix = x.idx;
  Var<Scalar> o{&t, t.size()};
  t.make(std::move(out), x.needs_grad(), [ix, o, outer, d, inner](Tape<Scalar>& tp) {
    if (!tp.wants_grad(ix)) return;
    // dx = y * (g - sum_j g_j y_j)
    const Scalar* pg = tp.grad(o.idx).data();
    const Scalar* py = tp.value(o.idx).data();
    Scalar* pa = tp.grad_acc(ix).data();
    for (int64_t ot = 0; ot < outer; ++ot)
      for (int64_t in = 0; in < inner; ++in) {
        int64_t base = ot * d * inner + in;
        Scalar dot(0);
        for (int64_t j = 0; j < d; ++j) dot += pg[base + j * inner] * py[base + j * inner];
        for (int64_t j = 0; j < d; ++j) {
          int64_t k = base + j * inner;
          pa[k] += py[k] * (pg[k] - dot);
        }
      }
  });
  return o;
}

/**
 * log(sum(exp(x))) along `axis`, stable: m + log sum exp(x - m) with
 * m = max(x). Backward uses softmax(x) recovered as exp(x - out).
 */
template <typename Scalar>
Var<Scalar> logsumexp(Var<Scalar> x, int64_t axis, bool keepdim = false) {
  Tape<Scalar>& t = *x.tape;
  int64_t outer, d, inner;
  detail::axis_split(x.shape(), axis, outer, d, inner);
  if (d == 0) throw shape_error("logsumexp over empty axis");
  Tensor<Scalar> out(detail::reduced_shape(x.shape(), axis, keepdim));
  const Scalar* px = x.val().data();
  Scalar* po = out.data();
  for (int64_t ot = 0; ot < outer; ++ot)
    for (int64_t in = 0; in < inner; ++in) {
      const Scalar* xr = px + ot * d * inner + in;
      Scalar mx = xr[0];
      for (int64_t j = 1; j < d; ++j) mx = std::max(mx, xr[j * inner]);
      Scalar z(0);
      for (int64_t j = 0; j < d; ++j) z += std::exp(xr[j * inner] - mx);
      po[ot * inner + in] = mx + std::log(z);
    }
  int64_t ix = x.idx;
  Var<Scalar> o{&t, t.size()};
  t.make(std::move(out), x.needs_grad(), [ix, o, outer, d, inner](Tape<Scalar>& tp) {
    if (!tp.wants_grad(ix)) return;
    const Scalar* pg = tp.grad(o.idx).data();
    const Scalar* pov = tp.value(o.idx).data();
    const Scalar* pxv = tp.value(ix).data();
    Scalar* pa = tp.grad_acc(ix).data();
    for (int64_t ot = 0; ot < outer; ++ot)
      for (int64_t in = 0; in < inner; ++in) {
        int64_t base = ot * d * inner + in;
        Scalar lse = pov[ot * inner + in];
        Scalar g = pg[ot * inner + in];
        for (int64_t j = 0; j < d; ++j) {
          int64_t k = base + j * inner;
          pa[k] += g * std::exp(pxv[k] - lse);
        }
      }
  });
  return o;
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

template <typename Scalar>
Var<Scalar> reshape(Var<Scalar> x, Shape s) {
  if (shape_numel(s) != x.numel())
    throw shape_error("reshape " + shape_str(x.shape()) + " -> " + shape_str(s));
  Tape<Scalar>& t = *x.tape;
  Tensor<Scalar> out = x.val().reshaped(s);
  int64_t ix = x.idx;
  Var<Scalar> o{&t, t.size()};
  t.make(std::move(out), x.needs_grad(), [ix, o](Tape<Scalar>& tp) {
    if (tp.wants_grad(ix)) tp.grad_acc(ix).arr() += tp.grad(o.idx).arr();
  });
  return o;
}

/// Axis permutation (generalized transpose). perm[i] names the source axis
/// that lands at output axis i.
template <typename Scalar>
Var<Scalar> permute(Var<Scalar> x, std::vector<int64_t> perm) {
  int64_t r = x.rank();
  if (static_cast<int64_t>(perm.size()) != r) throw shape_error("permute rank mismatch");
  std::vector<bool> seen(static_cast<size_t>(r), false);
  Shape os(static_cast<size_t>(r));
  for (int64_t i = 0; i < r; ++i) {
    int64_t p = perm[static_cast<size_t>(i)];
    if (p < 0 || p >= r || seen[static_cast<size_t>(p)]) throw shape_error("invalid permutation");
    seen[static_cast<size_t>(p)] = true;
    os[static_cast<size_t>(i)] = x.dim(p);
  }
  Tape<Scalar>& t = *x.tape;
  Shape xst = row_major_strides(x.shape());
  // stride of output axis i in the source buffer
  std::vector<int64_t> src_stride(static_cast<size_t>(r));
  for (int64_t i = 0; i < r; ++i)
    src_stride[static_cast<size_t>(i)] = xst[static_cast<size_t>(perm[static_cast<size_t>(i)])];
  Tensor<Scalar> out(os);
  {
    const Scalar* px = x.val().data();
    Scalar* po = out.data();
    int64_t n = out.numel();
    if (n > 0) {
      std::vector<int64_t> ix(static_cast<size_t>(r), 0);
      int64_t off = 0;
      for (int64_t flat = 0; flat < n; ++flat) {
        po[flat] = px[off];
        for (int64_t d2 = r; d2-- > 0;) {
          size_t d = static_cast<size_t>(d2);
          ix[d]++;
          off += src_stride[d];
          if (ix[d] < os[d]) break;
          ix[d] = 0;
          off -= src_stride[d] * os[d];
        }
      }
    }
  }
  int64_t ix_node = x.idx;
  Var<Scalar> o{&t, t.size()};
  t.make(std::move(out), x.needs_grad(), [ix_node, o, os, src_stride, r](Tape<Scalar>& tp) {
    if (!tp.wants_grad(ix_node)) return;
    const Scalar* pg = tp.grad(o.idx).data();
    Scalar* pa = tp.grad_acc(ix_node).data();
    int64_t n = tp.grad(o.idx).numel();
    if (n == 0) return;
    std::vector<int64_t> ix(static_cast<size_t>(r), 0);
    int64_t off = 0;
    for (int64_t flat = 0; flat < n; ++flat) {
      pa[off] += pg[flat];
      for (int64_t d2 = r; d2-- > 0;) {
        size_t d = static_cast<size_t>(d2);
        ix[d]++;
        off += src_stride[d];
        if (ix[d] < os[d]) break;
        ix[d] = 0;
        off -= src_stride[d] * os[d];
      }
    }
  });
  return o;
}

/// Contiguous slice [start, start+len) along `axis`.
template <typename Scalar>
Var<Scalar> slice(Var<Scalar> x, int64_t axis, int64_t start, int64_t len) {
  int64_t outer, d, inner;
  detail::axis_split(x.shape(), axis, outer, d, inner);
  if (start < 0 || len < 0 || start + len > d)
    throw shape_error("slice [" + std::to_string(start) + "," + std::to_string(start + len) +
                      ") out of axis extent " + std::to_string(d));
  Shape os = x.shape();
  if (axis < 0) axis += x.rank();
  os[static_cast<size_t>(axis)] = len;
  Tape<Scalar>& t = *x.tape;
  Tensor<Scalar> out(os);
  const Scalar* px = x.val().data();
  Scalar* po = out.data();
  for (int64_t ot = 0; ot < outer; ++ot)
    std::copy(px + (ot * d + start) * inner, px + (ot * d + start + len) * inner,
              po + ot * len * inner);
  int64_t ix = x.idx;
  Var<Scalar> o{&t, t.size()};
  t.make(std::move(out), x.needs_grad(), [ix, o, outer, d, inner, start, len](Tape<Scalar>& tp) {
    if (!tp.wants_grad(ix)) return;
    const Scalar* pg = tp.grad(o.idx).data();
    Scalar* pa = tp.grad_acc(ix).data();
    for (int64_t ot = 0; ot < outer; ++ot) {
      Scalar* dst = pa + (ot * d + start) * inner;
      const Scalar* src = pg + ot * len * inner;
      for (int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
    }
  });
  return o;
}

/// Concatenate along `axis`; all other extents must match.
template <typename Scalar>
Var<Scalar> concat(const std::vector<Var<Scalar>>& xs, int64_t axis) {
  if (xs.empty()) throw shape_error("concat of nothing");
  Tape<Scalar>& t = *xs[0].tape;
  int64_t r = xs[0].rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw shape_error("concat axis out of range");
  Shape os = xs[0].shape();
  int64_t total = 0;
  for (const auto& x : xs) {
    detail::check_same_tape(xs[0], x);
    if (x.rank() != r) throw shape_error("concat rank mismatch");
    for (int64_t i = 0; i < r; ++i)
      if (i != axis && x.dim(i) != os[static_cast<size_t>(i)])
        throw shape_error("concat extent mismatch at axis " + std::to_string(i));
    total += x.dim(axis);
  }
  os[static_cast<size_t>(axis)] = total;
  int64_t outer = 1, inner = 1;
  for (int64_t i = 0; i < axis; ++i) outer *= os[static_cast<size_t>(i)];
  for (int64_t i = axis + 1; i < r; ++i) inner *= os[static_cast<size_t>(i)];
  Tensor<Scalar> out(os);
  Scalar* po = out.data();
  std::vector<int64_t> idxs;
  std::vector<int64_t> lens;
  bool ng = false;
  int64_t offset = 0;
  for (const auto& x : xs) {
    int64_t len = x.dim(axis);
    const Scalar* px = x.val().data();
    for (int64_t ot = 0; ot < outer; ++ot)
      std::copy(px + ot * len * inner, px + (ot + 1) * len * inner,
                po + (ot * total + offset) * inner);
    idxs.push_back(x.idx);
    lens.push_back(len);
    ng = ng || x.needs_grad();
    offset += len;
  }
  Var<Scalar> o{&t, t.size()};
  t.make(std::move(out), ng, [idxs, lens, o, outer, inner, total](Tape<Scalar>& tp) {
    const Scalar* pg = tp.grad(o.idx).data();
    int64_t offset = 0;
    for (size_t k = 0; k < idxs.size(); ++k) {
      int64_t len = lens[k];
      if (tp.wants_grad(idxs[k])) {
        Scalar* pa = tp.grad_acc(idxs[k]).data();
        for (int64_t ot = 0; ot < outer; ++ot) {
          const Scalar* src = pg + (ot * total + offset) * inner;
          Scalar* dst = pa + ot * len * inner;
          for (int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
        }
      }
      offset += len;
    }
  });
  return o;
}

template <typename Scalar>
Var<Scalar> broadcast_to(Var<Scalar> x, Shape s) {
  Tape<Scalar>& t = *x.tape;
  if (broadcast_shape(x.shape(), s) != s)
    throw shape_error("cannot broadcast " + shape_str(x.shape()) + " to " + shape_str(s));
  Tensor<Scalar> zero(s);
  Tensor<Scalar> out =
      detail::bcast_apply(x.val(), zero, [](Scalar a, Scalar) { return a; });
  int64_t ix = x.idx;
  Var<Scalar> o{&t, t.size()};
  t.make(std::move(out), x.needs_grad(), [ix, o](Tape<Scalar>& tp) {
    if (tp.wants_grad(ix))
      tp.accumulate(ix, reduce_to_shape(tp.grad(o.idx), tp.value(ix).shape()));
  });
  return o;
}

// ---------------------------------------------------------------------------
// dropout
// ---------------------------------------------------------------------------

/**
 * Inverted dropout: keep with probability 1-p, scale kept units by 1/(1-p).
 * The mask is drawn at forward time from `rng` and reused in backward.
 * Callers skip the op entirely at eval time.
 */
template <typename Scalar>
Var<Scalar> dropout(Var<Scalar> x, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw contract_error("dropout probability must be in [0,1)");
  Tape<Scalar>& t = *x.tape;
  if (p == 0.0) return x;
  Tensor<Scalar> mask(x.shape());
  Scalar keep_scale = Scalar(1.0 / (1.0 - p));
  for (int64_t i = 0; i < mask.numel(); ++i)
    mask[i] = rng.bernoulli(1.0 - p) ? keep_scale : Scalar(0);
  Tensor<Scalar> out(x.shape());
  out.arr() = x.val().arr() * mask.arr();
  int64_t ix = x.idx;
  Var<Scalar> o{&t, t.size()};
  t.make(std::move(out), x.needs_grad(), [ix, o, mask](Tape<Scalar>& tp) {
    if (tp.wants_grad(ix)) tp.grad_acc(ix).arr() += tp.grad(o.idx).arr() * mask.arr();
  });
  return o;
}

// ---------------------------------------------------------------------------
// operator sugar
// ---------------------------------------------------------------------------

template <typename Scalar>
Var<Scalar> operator+(Var<Scalar> a, Var<Scalar> b) {
  return add(a, b);
}
template <typename Scalar>
Var<Scalar> operator-(Var<Scalar> a, Var<Scalar> b) {
  return sub(a, b);
}
template <typename Scalar>
Var<Scalar> operator*(Var<Scalar> a, Var<Scalar> b) {
  return mul(a, b);
}
template <typename Scalar>
Var<Scalar> operator/(Var<Scalar> a, Var<Scalar> b) {
  return div(a, b);
}
template <typename Scalar>
Var<Scalar> operator-(Var<Scalar> a) {
  return neg(a);
}
template <typename Scalar>
Var<Scalar> operator*(Var<Scalar> a, std::type_identity_t<Scalar> c) {
  return scale(a, c);
}
template <typename Scalar>
Var<Scalar> operator*(std::type_identity_t<Scalar> c, Var<Scalar> a) {
  return scale(a, c);
}
template <typename Scalar>
Var<Scalar> operator+(Var<Scalar> a, std::type_identity_t<Scalar> c) {
  return add_scalar(a, c);
}
template <typename Scalar>
Var<Scalar> operator+(std::type_identity_t<Scalar> c, Var<Scalar> a) {
  return add_scalar(a, c);
}
template <typename Scalar>
Var<Scalar> operator-(Var<Scalar> a, std::type_identity_t<Scalar> c) {
  return add_scalar(a, -c);
}

}  // namespace stsn
