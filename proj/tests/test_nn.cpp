#include <doctest.h>

#include <cmath>
#include <vector>

#include "stsn/adam.hpp"
#include "stsn/conv.hpp"
#include "stsn/gradcheck.hpp"
#include "stsn/nn.hpp"
#include "stsn/param.hpp"

using namespace stsn;
using Td = Tensor<double>;
using Vd = Var<double>;

namespace {

Vd pin(Vd y, uint64_t seed = 7) {
  Rng r(seed);
  Td w(y.shape());
  for (int64_t i = 0; i < w.numel(); ++i) w[i] = r.uniform(-1.0, 1.0);
  return sum(mul(y, y.tape->constant(w)));
}

Td rnd(Shape s, uint64_t seed, double lo = -2.0, double hi = 2.0) {
  Rng r(seed);
  return Td::uniform(std::move(s), r, lo, hi);
}

constexpr double kTol = 1e-6;

/// Direct six-loop convolution used as the reference implementation.
Td conv2d_naive(const Td& x, const Td& w, const Td* bias, int64_t stride, int64_t pad) {
  int64_t B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  int64_t Cout = w.dim(0), Kh = w.dim(2), Kw = w.dim(3);
  int64_t Ho = (H + 2 * pad - Kh) / stride + 1;
  int64_t Wo = (W + 2 * pad - Kw) / stride + 1;
  Td out({B, Cout, Ho, Wo});
  for (int64_t b = 0; b < B; ++b)
    for (int64_t co = 0; co < Cout; ++co)
      for (int64_t oh = 0; oh < Ho; ++oh)
        for (int64_t ow = 0; ow < Wo; ++ow) {
          double acc = bias ? (*bias)[co] : 0.0;
          for (int64_t ci = 0; ci < Cin; ++ci)
            for (int64_t kh = 0; kh < Kh; ++kh)
              for (int64_t kw = 0; kw < Kw; ++kw) {
                int64_t ih = oh * stride + kh - pad;
                int64_t iw = ow * stride + kw - pad;
                if (ih >= 0 && ih < H && iw >= 0 && iw < W)
                  acc += x(b, ci, ih, iw) * w(co, ci, kh, kw);
              }
          out(b, co, oh, ow) = acc;
        }
  return out;
}

}  // namespace

TEST_CASE("conv2d: 1x1 scaling kernel doubles every value") {
  Tape<double> t;
  auto x = t.constant(rnd({2, 1, 3, 3}, 1));
  auto w = t.constant(Td({1, 1, 1, 1}, std::vector<double>{2.0}));
  auto y = conv2d(x, w, 1, 0).val();
  CHECK(y.shape() == Shape{2, 1, 3, 3});
  for (int64_t i = 0; i < y.numel(); ++i) CHECK(y[i] == doctest::Approx(2.0 * x.val()[i]));
}

TEST_CASE("conv2d: 3x3 ones kernel on constant image gives 9c interior") {
  Tape<double> t;
  double c = 0.7;
  auto x = t.constant(Td::full({1, 1, 5, 5}, c));
  auto w = t.constant(Td::ones({1, 1, 3, 3}));
  auto y = conv2d(x, w, 1, 1).val();
  CHECK(y.shape() == Shape{1, 1, 5, 5});
  for (int64_t i = 1; i < 4; ++i)
    for (int64_t j = 1; j < 4; ++j) CHECK(y(0, 0, i, j) == doctest::Approx(9.0 * c));
  CHECK(y(0, 0, 0, 0) == doctest::Approx(4.0 * c));  // corner sees a 2x2 window
}

TEST_CASE("conv2d: k5 s1 p2 preserves spatial extent; output extent formula") {
  Tape<double> t;
  for (int64_t hw : {1, 5, 8, 13}) {
    auto x = t.constant(rnd({1, 2, hw, hw}, 10 + static_cast<uint64_t>(hw)));
    auto w = t.constant(rnd({3, 2, 5, 5}, 20 + static_cast<uint64_t>(hw)));
    auto y = conv2d(x, w, 1, 2);
    CHECK(y.shape() == Shape{1, 3, hw, hw});
  }
  auto x = t.constant(rnd({1, 1, 7, 9}, 30));
  auto w = t.constant(rnd({2, 1, 3, 3}, 31));
  auto y = conv2d(x, w, 2, 1);
  // floor((7 + 2 - 3)/2) + 1 = 4 ; floor((9 + 2 - 3)/2) + 1 = 5
  CHECK(y.shape() == Shape{1, 2, 4, 5});
}

TEST_CASE("conv2d: kernel larger than padded input is a shape error") {
  Tape<double> t;
  auto x = t.constant(rnd({1, 1, 3, 3}, 40));
  auto w = t.constant(rnd({1, 1, 5, 5}, 41));
  CHECK_THROWS_AS(conv2d(x, w, 1, 0), shape_error);
  CHECK_NOTHROW(conv2d(x, w, 1, 1));  // padded extent 5 fits the 5x5 kernel
  auto wc = t.constant(rnd({1, 2, 3, 3}, 42));
  CHECK_THROWS_AS(conv2d(x, wc, 1, 1), shape_error);  // channel mismatch
}

TEST_CASE("conv2d matches the naive reference over strides and paddings") {
  for (auto [stride, pad] : std::vector<std::pair<int64_t, int64_t>>{{1, 0}, {1, 2}, {2, 1}, {3, 2}}) {
    Tape<double> t;
    Td xv = rnd({2, 3, 6, 7}, 50 + static_cast<uint64_t>(stride * 10 + pad));
    Td wv = rnd({4, 3, 3, 3}, 60 + static_cast<uint64_t>(stride * 10 + pad));
    Td bv = rnd({4}, 70);
    auto y = conv2d(t.constant(xv), t.constant(wv), t.constant(bv), stride, pad).val();
    Td ref = conv2d_naive(xv, wv, &bv, stride, pad);
    REQUIRE(y.shape() == ref.shape());
    for (int64_t i = 0; i < y.numel(); ++i) CHECK(y[i] == doctest::Approx(ref[i]).epsilon(1e-10));
  }
}

TEST_CASE("conv2d pointwise fast path equals general path") {
  Tape<double> t;
  Td xv = rnd({3, 4, 5, 5}, 80);
  Td wv = rnd({6, 4, 1, 1}, 81);
  auto y = conv2d(t.constant(xv), t.constant(wv), 1, 0).val();
  Td ref = conv2d_naive(xv, wv, nullptr, 1, 0);
  for (int64_t i = 0; i < y.numel(); ++i) CHECK(y[i] == doctest::Approx(ref[i]).epsilon(1e-12));
}

TEST_CASE("conv2d gradients (x, w, bias) across configurations") {
  for (auto [stride, pad] : std::vector<std::pair<int64_t, int64_t>>{{1, 0}, {1, 1}, {2, 1}}) {
    auto rep = finite_difference_check<double>(
        {rnd({2, 2, 4, 4}, 90), rnd({3, 2, 3, 3}, 91), rnd({3}, 92)},
        [&](Tape<double>& tp, const std::vector<Vd>& v) {
          return pin(conv2d(v[0], v[1], v[2], stride, pad));
        },
        1e-5);
    CAPTURE(stride);
    CAPTURE(pad);
    CHECK(rep.max_rel_err < kTol);
  }
  // pointwise path
  auto rep = finite_difference_check<double>(
      {rnd({2, 3, 3, 3}, 95), rnd({2, 3, 1, 1}, 96)},
      [&](Tape<double>& tp, const std::vector<Vd>& v) { return pin(conv2d(v[0], v[1], 1, 0)); },
      1e-5);
  CHECK(rep.max_rel_err < kTol);
}

TEST_CASE("linear forward and gradient") {
  Tape<double> t;
  auto x = t.constant(Td({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6}));
  auto w = t.constant(Td({2, 3}, std::vector<double>{1, 0, 0, 0, 1, 0}));
  auto b = t.constant(Td({2}, std::vector<double>{10, 20}));
  auto y = linear(x, w, b).val();
  CHECK(y.shape() == Shape{2, 2});
  CHECK(y.vec() == std::vector<double>{11, 22, 14, 25});

  // leading axes pass through
  auto x3 = t.constant(rnd({2, 3, 4}, 100));
  auto w3 = t.constant(rnd({5, 4}, 101));
  auto b3 = t.constant(rnd({5}, 102));
  CHECK(linear(x3, w3, b3).shape() == Shape{2, 3, 5});
  CHECK(linear(x3, w3).shape() == Shape{2, 3, 5});
  CHECK_THROWS_AS(linear(x3, t.constant(rnd({5, 3}, 103))), shape_error);

  auto rep = finite_difference_check<double>(
      {rnd({2, 2, 3}, 104), rnd({4, 3}, 105), rnd({4}, 106)},
      [&](Tape<double>& tp, const std::vector<Vd>& v) { return pin(linear(v[0], v[1], v[2])); },
      1e-5);
  CHECK(rep.max_rel_err < kTol);
}

TEST_CASE("layer_norm: constant input collapses to shift; [1,3] -> [-1,1]") {
  Tape<double> t;
  auto gain = t.constant(Td::ones({4}));
  auto shift = t.constant(Td::zeros({4}));
  auto c = t.constant(Td::full({4}, 3.0));
  auto y = layer_norm(c, gain, shift).val();
  for (int64_t i = 0; i < 4; ++i) CHECK(y[i] == doctest::Approx(0.0).epsilon(1e-9));

  auto g2 = t.constant(Td::ones({2}));
  auto s2 = t.constant(Td::zeros({2}));
  auto x = t.constant(Td({2}, std::vector<double>{1.0, 3.0}));
  auto y2 = layer_norm(x, g2, s2, 1e-12).val();
  CHECK(y2[0] == doctest::Approx(-1.0).epsilon(1e-6));
  CHECK(y2[1] == doctest::Approx(1.0).epsilon(1e-6));

  auto sh = t.constant(Td({2}, std::vector<double>{5.0, 7.0}));
  auto y3 = layer_norm(x, g2, sh, 1e-12).val();
  CHECK(y3[0] == doctest::Approx(4.0).epsilon(1e-6));
  CHECK(y3[1] == doctest::Approx(8.0).epsilon(1e-6));
}

TEST_CASE("layer_norm: random vector is standardized; gradient flows") {
  Tape<double> t;
  auto gain = t.constant(Td::ones({32}));
  auto shift = t.constant(Td::zeros({32}));
  auto x = t.constant(rnd({5, 32}, 110));
  auto y = layer_norm(x, gain, shift, 1e-8).val();
  for (int64_t r = 0; r < 5; ++r) {
    double m = 0, v = 0;
    for (int64_t i = 0; i < 32; ++i) m += y(r, i);
    m /= 32;
    for (int64_t i = 0; i < 32; ++i) v += (y(r, i) - m) * (y(r, i) - m);
    v /= 32;
    CHECK(std::abs(m) <= 1e-5);
    CHECK(std::abs(v - 1.0) <= 1e-3);
  }
  auto rep = finite_difference_check<double>(
      {rnd({3, 6}, 111), rnd({6}, 112), rnd({6}, 113)},
      [&](Tape<double>& tp, const std::vector<Vd>& v) {
        return pin(layer_norm(v[0], v[1], v[2]));
      },
      1e-5);
  CHECK(rep.max_rel_err < kTol);
}

TEST_CASE("tcn: constant column zeros out; [1,3] -> [-1,1]; M<2 rejected") {
  Tape<double> t;
  auto gain = t.constant(Td::ones({3}));
  auto shift = t.constant(Td::zeros({3}));
  Td seq({4, 3});
  for (int64_t m = 0; m < 4; ++m) {
    seq(m, 0) = 2.5;                    // constant column
    seq(m, 1) = (m < 2) ? 1.0 : 3.0;    // mean 2, pop std 1
    seq(m, 2) = double(m);
  }
  auto y = tcn(t.constant(seq), gain, shift, 0, 1e-12).val();
  for (int64_t m = 0; m < 4; ++m) CHECK(y(m, 0) == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(y(0, 1) == doctest::Approx(-1.0).epsilon(1e-6));
  CHECK(y(2, 1) == doctest::Approx(1.0).epsilon(1e-6));

  auto two = tcn(t.constant(Td({2, 1}, std::vector<double>{1.0, 3.0})),
                 t.constant(Td::ones({1})), t.constant(Td::zeros({1})), 0, 1e-12)
                 .val();
  CHECK(two[0] == doctest::Approx(-1.0).epsilon(1e-6));
  CHECK(two[1] == doctest::Approx(1.0).epsilon(1e-6));

  auto one = t.constant(Td({1, 3}, std::vector<double>{1, 2, 3}));
  CHECK_THROWS_AS(tcn(one, gain, shift), contract_error);
}

TEST_CASE("tcn: standardizes features over the sequence; matches scalar reference") {
  Tape<double> t;
  int64_t M = 18, D = 4;
  Td seq = rnd({M, D}, 120);
  Td gv = rnd({D}, 121), sv = rnd({D}, 122);
  auto y = tcn(t.constant(seq), t.constant(gv), t.constant(sv), 0, 1e-8).val();
  for (int64_t d = 0; d < D; ++d) {
    double m = 0, var = 0;
    for (int64_t i = 0; i < M; ++i) m += seq(i, d);
    m /= M;
    for (int64_t i = 0; i < M; ++i) var += (seq(i, d) - m) * (seq(i, d) - m);
    var /= M;
    for (int64_t i = 0; i < M; ++i) {
      double ref = (seq(i, d) - m) / std::sqrt(var + 1e-8) * gv[d] + sv[d];
      CHECK(y(i, d) == doctest::Approx(ref).epsilon(1e-10));
    }
  }
  // with unit gain / zero shift the output is standardized per feature
  auto z = tcn(t.constant(seq), t.constant(Td::ones({D})), t.constant(Td::zeros({D})), 0,
               1e-10)
               .val();
  for (int64_t d = 0; d < D; ++d) {
    double m = 0, var = 0;
    for (int64_t i = 0; i < M; ++i) m += z(i, d);
    m /= M;
    for (int64_t i = 0; i < M; ++i) var += (z(i, d) - m) * (z(i, d) - m);
    var /= M;
    CHECK(std::abs(m) <= 1e-5);
    CHECK(std::abs(var - 1.0) <= 1e-3);
  }

  auto rep = finite_difference_check<double>(
      {rnd({5, 3}, 123), rnd({3}, 124), rnd({3}, 125)},
      [&](Tape<double>& tp, const std::vector<Vd>& v) { return pin(tcn(v[0], v[1], v[2])); },
      1e-5);
  CHECK(rep.max_rel_err < kTol);

  // batched form normalizes each batch element independently
  Td batch({2, M, D});
  for (int64_t i = 0; i < M * D; ++i) {
    batch[i] = seq[i];
    batch[M * D + i] = seq[i] * 3.0 + 1.0;
  }
  auto yb = tcn(t.constant(batch), t.constant(Td::ones({D})), t.constant(Td::zeros({D})), 1,
                1e-10)
                .val();
  auto y0 = tcn(t.constant(seq), t.constant(Td::ones({D})), t.constant(Td::zeros({D})), 0,
                1e-10)
                .val();
  for (int64_t i = 0; i < M * D; ++i) {
    CHECK(yb[i] == doctest::Approx(y0[i]).epsilon(1e-9));
    // affine-transformed copy standardizes to the same values
    CHECK(yb[M * D + i] == doctest::Approx(y0[i]).epsilon(1e-6));
  }
}

namespace {

/// Scalar-loop GRU reference with packed (r,z,n) weights.
std::vector<double> gru_naive(const std::vector<double>& h, const std::vector<double>& u,
                              const Td& wih, const Td& whh, const Td& bih, const Td& bhh) {
  int64_t d = static_cast<int64_t>(h.size());
  auto gate = [&](const Td& w, const Td& b, const std::vector<double>& x, int64_t row) {
    double acc = b[row];
    for (int64_t j = 0; j < d; ++j) acc += w(row, j) * x[static_cast<size_t>(j)];
    return acc;
  };
  std::vector<double> out(static_cast<size_t>(d));
  for (int64_t i = 0; i < d; ++i) {
    double r = 1.0 / (1.0 + std::exp(-(gate(wih, bih, u, i) + gate(whh, bhh, h, i))));
    double z = 1.0 / (1.0 + std::exp(-(gate(wih, bih, u, d + i) + gate(whh, bhh, h, d + i))));
    double n = std::tanh(gate(wih, bih, u, 2 * d + i) + r * gate(whh, bhh, h, 2 * d + i));
    out[static_cast<size_t>(i)] = (1.0 - z) * n + z * h[static_cast<size_t>(i)];
  }
  return out;
}

}  // namespace

TEST_CASE("gru_cell: zero everything gives zero; update gate saturation preserves state") {
  Tape<double> t;
  int64_t d = 3;
  auto h = t.constant(Td::zeros({1, d}));
  auto u = t.constant(Td::zeros({1, d}));
  auto wih = t.constant(Td::zeros({3 * d, d}));
  auto whh = t.constant(Td::zeros({3 * d, d}));
  auto bih = t.constant(Td::zeros({3 * d}));
  auto bhh = t.constant(Td::zeros({3 * d}));
  auto y = gru_cell(h, u, wih, whh, bih, bhh).val();
  for (int64_t i = 0; i < d; ++i) CHECK(y[i] == doctest::Approx(0.0));

  // push the update-gate bias towards +inf: output -> h
  Td big = Td::zeros({3 * d});
  for (int64_t i = d; i < 2 * d; ++i) big[i] = 50.0;
  auto hv = t.constant(rnd({1, d}, 130));
  auto uv = t.constant(rnd({1, d}, 131));
  auto y2 = gru_cell(hv, uv, t.constant(rnd({3 * d, d}, 132, -0.5, 0.5)),
                     t.constant(rnd({3 * d, d}, 133, -0.5, 0.5)), t.constant(big),
                     t.constant(Td::zeros({3 * d})))
                .val();
  for (int64_t i = 0; i < d; ++i) CHECK(y2[i] == doctest::Approx(hv.val()[i]).epsilon(1e-9));

  CHECK_THROWS_AS(gru_cell(hv, t.constant(rnd({1, d + 1}, 134)), wih, whh, bih, bhh),
                  shape_error);
  CHECK_THROWS_AS(gru_cell(hv, uv, t.constant(rnd({2 * d, d}, 135)), whh, bih, bhh), shape_error);
}

TEST_CASE("gru_cell matches the scalar reference and passes gradcheck") {
  int64_t d = 4;
  Td hv = rnd({2, d}, 140), uv = rnd({2, d}, 141);
  Td wih = rnd({3 * d, d}, 142, -0.7, 0.7), whh = rnd({3 * d, d}, 143, -0.7, 0.7);
  Td bih = rnd({3 * d}, 144, -0.5, 0.5), bhh = rnd({3 * d}, 145, -0.5, 0.5);
  Tape<double> t;
  auto y = gru_cell(t.constant(hv), t.constant(uv), t.constant(wih), t.constant(whh),
                    t.constant(bih), t.constant(bhh))
               .val();
  for (int64_t b = 0; b < 2; ++b) {
    std::vector<double> hrow(hv.data() + b * d, hv.data() + (b + 1) * d);
    std::vector<double> urow(uv.data() + b * d, uv.data() + (b + 1) * d);
    auto ref = gru_naive(hrow, urow, wih, whh, bih, bhh);
    for (int64_t i = 0; i < d; ++i)
      CHECK(y(b, i) == doctest::Approx(ref[static_cast<size_t>(i)]).epsilon(1e-10));
  }

  auto rep = finite_difference_check<double>(
      {hv, uv, wih, whh, bih, bhh},
      [&](Tape<double>& tp, const std::vector<Vd>& v) {
        return pin(gru_cell(v[0], v[1], v[2], v[3], v[4], v[5]));
      },
      1e-5);
  CHECK(rep.max_rel_err < kTol);
}

TEST_CASE("mse: zero on identity, 0.01 on +0.1 offset, matches scalar loop") {
  Tape<double> t;
  auto a = t.constant(rnd({4, 5}, 150));
  CHECK(mse(a, a).val()[0] == 0.0);
  auto b = t.constant(Td(a.val().shape(), [&] {
    std::vector<double> v = a.val().vec();
    for (auto& x : v) x += 0.1;
    return v;
  }()));
  CHECK(mse(a, b).val()[0] == doctest::Approx(0.01).epsilon(1e-9));
  auto c = t.constant(rnd({4, 5}, 151));
  double ref = 0;
  for (int64_t i = 0; i < 20; ++i) {
    double dlt = a.val()[i] - c.val()[i];
    ref += dlt * dlt;
  }
  ref /= 20;
  CHECK(mse(a, c).val()[0] == doctest::Approx(ref).epsilon(1e-12));
  CHECK_THROWS_AS(mse(a, t.constant(rnd({5, 4}, 152))), shape_error);
}

TEST_CASE("adam: frozen three-step trace on a scalar parameter") {
  ParamStore<double> store;
  store.add("p", Td::scalar(0.5));
  Adam<double> opt;
  const double grads[3] = {0.3, -0.2, 0.5};
  const double expect[3] = {0.40000000333333322, 0.38554795092859671, 0.32718779559383506};
  for (int s = 0; s < 3; ++s) {
    Tape<double> tape;
    BoundParams<double> bound(store, tape, true);
    auto loss = sum(mul(bound["p"], tape.constant(Td::scalar(grads[s]))));
    tape.backward(loss);
    opt.step(store, bound, 0.1);
    CHECK(store.value("p")[0] == doctest::Approx(expect[s]).epsilon(1e-12));
  }
  CHECK(opt.steps() == 3);
}

TEST_CASE("adam: first step moves by ~lr*sign(g); zero gradient leaves params fixed") {
  ParamStore<double> store;
  store.add("w", Td({2}, std::vector<double>{1.0, -2.0}));
  Adam<double> opt;
  {
    Tape<double> tape;
    BoundParams<double> bound(store, tape, true);
    auto g = tape.constant(Td({2}, std::vector<double>{0.002, -3.0}));
    tape.backward(sum(mul(bound["w"], g)));
    opt.step(store, bound, 0.01);
  }
  CHECK(store.value("w")[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-4));
  CHECK(store.value("w")[1] == doctest::Approx(-2.0 + 0.01).epsilon(1e-4));
  {
    // zero gradient with fresh moment state: m and v stay 0, update is exactly 0
    Adam<double> fresh;
    Tape<double> tape;
    BoundParams<double> bound(store, tape, true);
    auto c = tape.leaf(Td::scalar(1.0), true);  // loss independent of w
    tape.backward(mul(c, c));
    double before0 = store.value("w")[0], before1 = store.value("w")[1];
    fresh.step(store, bound, 0.01);
    CHECK(store.value("w")[0] == before0);
    CHECK(store.value("w")[1] == before1);
  }
}

TEST_CASE("learning-rate warmup ramps linearly then holds") {
  CHECK(lr_at_step(4e-4, 1, 100) == doctest::Approx(4e-6));
  CHECK(lr_at_step(4e-4, 50, 100) == doctest::Approx(2e-4));
  CHECK(lr_at_step(4e-4, 100, 100) == doctest::Approx(4e-4));
  CHECK(lr_at_step(4e-4, 5000, 100) == doctest::Approx(4e-4));
  CHECK(lr_at_step(4e-4, 1, 0) == doctest::Approx(4e-4));
}

TEST_CASE("param store: ordering, duplicates, lookup") {
  ParamStore<double> store;
  store.add("a", Td::zeros({2}));
  store.add("b", Td::ones({3}));
  CHECK(store.size() == 2);
  CHECK(store.entry(0).name == "a");
  CHECK(store.entry(1).name == "b");
  CHECK(store.scalar_count() == 5);
  CHECK_THROWS_AS(store.add("a", Td::zeros({1})), contract_error);
  CHECK_THROWS_AS(store.value("missing"), contract_error);

  Tape<double> tape;
  BoundParams<double> bound(store, tape, true);
  CHECK(bound["b"].val()[2] == 1.0);
  // binding is a snapshot: mutating the master does not affect the tape copy
  store.value("b")[2] = 9.0;
  CHECK(bound["b"].val()[2] == 1.0);
}
