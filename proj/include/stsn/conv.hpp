#pragma once

#include <cstring>
#include <string>

#include "stsn/ops.hpp"
#include "stsn/tape.hpp"
#include "stsn/tensor.hpp"

namespace stsn {

namespace detail {

struct Conv2dDims {
  int64_t B, Cin, H, W;
  int64_t Cout, Kh, Kw;
  int64_t stride, pad;
  int64_t Ho, Wo;
  int64_t ckk() const { return Cin * Kh * Kw; }
  int64_t l() const { return Ho * Wo; }
};

inline int64_t conv_out_extent(int64_t in, int64_t k, int64_t stride, int64_t pad) {
  return (in + 2 * pad - k) / stride + 1;
}

inline Conv2dDims conv2d_dims(const Shape& x, const Shape& w, int64_t stride, int64_t pad) {
  if (x.size() != 4 || w.size() != 4)
    throw shape_error("conv2d expects x[B,C,H,W] and w[Cout,Cin,Kh,Kw], got " + shape_str(x) +
                      " and " + shape_str(w));
  if (stride < 1 || pad < 0) throw contract_error("conv2d stride must be >=1 and padding >=0");
  Conv2dDims d;
  d.B = x[0];
  d.Cin = x[1];
  d.H = x[2];
  d.W = x[3];
  d.Cout = w[0];
  d.Kh = w[2];
  d.Kw = w[3];
  d.stride = stride;
  d.pad = pad;
  if (w[1] != d.Cin)
    throw shape_error("conv2d channel mismatch: input " + std::to_string(d.Cin) + ", kernel " +
                      std::to_string(w[1]));
  if (d.Kh > d.H + 2 * pad || d.Kw > d.W + 2 * pad)
    throw shape_error("conv2d kernel " + std::to_string(d.Kh) + "x" + std::to_string(d.Kw) +
                      " larger than padded input " + std::to_string(d.H + 2 * pad) + "x" +
                      std::to_string(d.W + 2 * pad));
  d.Ho = conv_out_extent(d.H, d.Kh, stride, pad);
  d.Wo = conv_out_extent(d.W, d.Kw, stride, pad);
  return d;
}

/// Unfold one image [Cin,H,W] into columns [Cin*Kh*Kw, Ho*Wo].
template <typename Scalar>
void im2col(const Scalar* x, const Conv2dDims& d, Scalar* col) {
  std::memset(col, 0, sizeof(Scalar) * static_cast<size_t>(d.ckk() * d.l()));
  for (int64_t c = 0; c < d.Cin; ++c)
    for (int64_t kh = 0; kh < d.Kh; ++kh)
      for (int64_t kw = 0; kw < d.Kw; ++kw) {
        Scalar* row = col + ((c * d.Kh + kh) * d.Kw + kw) * d.l();
        const Scalar* src = x + c * d.H * d.W;
        for (int64_t oh = 0; oh < d.Ho; ++oh) {
          int64_t ih = oh * d.stride + kh - d.pad;
          if (ih < 0 || ih >= d.H) continue;
          if (d.stride == 1) {
            int64_t lo = std::max<int64_t>(0, d.pad - kw);
            int64_t hi = std::min<int64_t>(d.Wo, d.W + d.pad - kw);
            if (lo < hi)
              std::memcpy(row + oh * d.Wo + lo, src + ih * d.W + lo + kw - d.pad,
                          sizeof(Scalar) * static_cast<size_t>(hi - lo));
          } else {
            for (int64_t ow = 0; ow < d.Wo; ++ow) {
              int64_t iw = ow * d.stride + kw - d.pad;
              if (iw >= 0 && iw < d.W) row[oh * d.Wo + ow] = src[ih * d.W + iw];
            }
          }
        }
      }
}

/// Scatter-add columns [Cin*Kh*Kw, Ho*Wo] back into an image gradient [Cin,H,W].
template <typename Scalar>
void col2im_acc(const Scalar* col, const Conv2dDims& d, Scalar* gx) {
  for (int64_t c = 0; c < d.Cin; ++c)
    for (int64_t kh = 0; kh < d.Kh; ++kh)
      for (int64_t kw = 0; kw < d.Kw; ++kw) {
        const Scalar* row = col + ((c * d.Kh + kh) * d.Kw + kw) * d.l();
        Scalar* dst = gx + c * d.H * d.W;
        for (int64_t oh = 0; oh < d.Ho; ++oh) {
          int64_t ih = oh * d.stride + kh - d.pad;
          if (ih < 0 || ih >= d.H) continue;
          for (int64_t ow = 0; ow < d.Wo; ++ow) {
            int64_t iw = ow * d.stride + kw - d.pad;
            if (iw >= 0 && iw < d.W) dst[ih * d.W + iw] += row[oh * d.Wo + ow];
          }
        }
      }
}

template <typename Scalar>
Var<Scalar> conv2d_impl(Var<Scalar> x, Var<Scalar> w, const Var<Scalar>* bias, int64_t stride,
                        int64_t pad) {
  detail::check_same_tape(x, w);
  if (bias) detail::check_same_tape(x, *bias);
  Conv2dDims d = conv2d_dims(x.shape(), w.shape(), stride, pad);
  if (bias && bias->shape() != Shape{d.Cout})
    throw shape_error("conv2d bias shape " + shape_str(bias->shape()) + ", expected [" +
                      std::to_string(d.Cout) + "]");
  Tape<Scalar>& t = *x.tape;
  using CM = typename Tensor<Scalar>::ConstMatMap;
  using MM = typename Tensor<Scalar>::MatMap;

  // Pointwise 1x1/stride-1/no-pad convolutions skip the im2col buffer: the
  // image is already the column matrix.
  bool pointwise = (d.Kh == 1 && d.Kw == 1 && stride == 1 && pad == 0);

  Tensor<Scalar> out({d.B, d.Cout, d.Ho, d.Wo});
  {
    CM Wm(w.val().data(), d.Cout, d.ckk());
    Tensor<Scalar> col;
    if (!pointwise) col = Tensor<Scalar>({d.ckk(), d.l()});
    for (int64_t b = 0; b < d.B; ++b) {
      const Scalar* xb = x.val().data() + b * d.Cin * d.H * d.W;
      MM Y(out.data() + b * d.Cout * d.l(), d.Cout, d.l());
      if (pointwise) {
        CM C(xb, d.ckk(), d.l());
        Y.noalias() = Wm * C;
      } else {
        im2col(xb, d, col.data());
        CM C(col.data(), d.ckk(), d.l());
        Y.noalias() = Wm * C;
      }
      if (bias) {
        const Scalar* pb = bias->val().data();
        for (int64_t c = 0; c < d.Cout; ++c) Y.row(c).array() += pb[c];
      }
    }
  }

  bool ng = x.needs_grad() || w.needs_grad() || (bias && bias->needs_grad());
  int64_t ix = x.idx, iw = w.idx, ib = bias ? bias->idx : -1;
  Var<Scalar> o{&t, t.size()};
  t.make(std::move(out), ng, [ix, iw, ib, o, d, pointwise](Tape<Scalar>& tp) {
    const Tensor<Scalar>& gv = tp.grad(o.idx);
    const Tensor<Scalar>& xv = tp.value(ix);
    const Tensor<Scalar>& wv = tp.value(iw);
    bool want_x = tp.wants_grad(ix);
    bool want_w = tp.wants_grad(iw);
    bool want_b = ib >= 0 && tp.wants_grad(ib);
    CM Wm(wv.data(), d.Cout, d.ckk());
    Tensor<Scalar> col, gcol;
    if (!pointwise && (want_w || want_x)) {
      col = Tensor<Scalar>({d.ckk(), d.l()});
      gcol = Tensor<Scalar>({d.ckk(), d.l()});
    }
    for (int64_t b = 0; b < d.B; ++b) {
      CM G(gv.data() + b * d.Cout * d.l(), d.Cout, d.l());
      const Scalar* xb = xv.data() + b * d.Cin * d.H * d.W;
      if (want_w) {
        MM GW(tp.grad_acc(iw).data(), d.Cout, d.ckk());
        if (pointwise) {
          CM C(xb, d.ckk(), d.l());
          GW.noalias() += G * C.transpose();
        } else {
          im2col(xb, d, col.data());
          CM C(col.data(), d.ckk(), d.l());
          GW.noalias() += G * C.transpose();
        }
      }
      if (want_x) {
        Scalar* gxb = tp.grad_acc(ix).data() + b * d.Cin * d.H * d.W;
        if (pointwise) {
          MM GX(gxb, d.ckk(), d.l());
          GX.noalias() += Wm.transpose() * G;
        } else {
          MM GC(gcol.data(), d.ckk(), d.l());
          GC.noalias() = Wm.transpose() * G;
          col2im_acc(gcol.data(), d, gxb);
        }
      }
      if (want_b) {
        // Sequential sum, not Eigen's redux: vectorized reductions peel to the
        // buffer's aligned boundary, making the result depend on where the
        // tape happened to allocate the gradient. Bitwise-reproducible
        // training needs an address-independent summation order.
        Scalar* gb = tp.grad_acc(ib).data();
        const Scalar* gr = gv.data() + b * d.Cout * d.l();
        for (int64_t c = 0; c < d.Cout; ++c) {
          Scalar s = 0;
          for (int64_t l = 0; l < d.l(); ++l) s += gr[c * d.l() + l];
          gb[c] += s;
        }
      }
    }
  });
  return o;
}

}  // namespace detail

/**
 * 2D convolution, x[B,Cin,H,W] * w[Cout,Cin,Kh,Kw] -> [B,Cout,Ho,Wo] with
 * Ho = floor((H + 2*pad - Kh)/stride) + 1 (likewise Wo). im2col + GEMM under
 * the hood; columns are rebuilt per image in backward rather than cached.
 */
template <typename Scalar>
Var<Scalar> conv2d(Var<Scalar> x, Var<Scalar> w, int64_t stride = 1, int64_t pad = 0) {
  return detail::conv2d_impl<Scalar>(x, w, nullptr, stride, pad);
}

template <typename Scalar>
Var<Scalar> conv2d(Var<Scalar> x, Var<Scalar> w, Var<Scalar> bias, int64_t stride = 1,
                   int64_t pad = 0) {
  return detail::conv2d_impl<Scalar>(x, w, &bias, stride, pad);
}

}  // namespace stsn
