#include <doctest.h>

#include <cmath>
#include <vector>

#include "stsn/gradcheck.hpp"
#include "stsn/model.hpp"

using namespace stsn;
using Td = Tensor<double>;
using Vd = Var<double>;

namespace {

Td rnd(Shape s, uint64_t seed, double lo = -2.0, double hi = 2.0) {
  Rng r(seed);
  return Td::uniform(std::move(s), r, lo, hi);
}

ReasonerConfig micro_reasoner(int64_t k_unused = 2) {
  (void)k_unused;
  ReasonerConfig cfg;
  cfg.d_slot = 4;
  cfg.layers = 1;
  cfg.heads = 1;
  cfg.d_head = 4;
  cfg.d_mlp = 8;
  cfg.dropout = 0.0;
  return cfg;
}

/**
 * Straight-line scalar reference for score_candidates, one candidate at a
 * time: TCN -> row/col projection -> CLS -> pre-norm transformer -> head.
 * Plain loops only; generic over layer count and head count.
 */
double reference_score(const ParamStore<double>& store, const ReasonerConfig& cfg, const Td& ctx,
                       const Td& cand, int64_t j) {
  int64_t K = ctx.dim(1), D = cfg.d_slot, M = 9 * K, S = M + 1;
  auto P = [&](const std::string& n) -> const Td& { return store.value(n); };

  auto raw = [&](int64_t i, int64_t d) -> double {
    return i < 8 * K ? ctx(i / K, i % K, d) : cand(j, i - 8 * K, d);
  };

  // TCN over the M slots (per feature), then row/col projection per panel
  std::vector<std::vector<double>> x(S, std::vector<double>(D, 0.0));
  for (int64_t d = 0; d < D; ++d) {
    double m = 0, v = 0;
    for (int64_t i = 0; i < M; ++i) m += raw(i, d) / double(M);
    for (int64_t i = 0; i < M; ++i) {
      double c = raw(i, d) - m;
      v += c * c / double(M);
    }
    for (int64_t i = 0; i < M; ++i) {
      double t = cfg.use_tcn ? (raw(i, d) - m) / std::sqrt(v + 1e-8) * P("rsn.tcn.gain")[d] +
                                   P("rsn.tcn.shift")[d]
                             : raw(i, d);
      Td oh = row_col_onehot<double>(i / K);
      double rc = P("rsn.rowcol.b")[d];
      for (int64_t e = 0; e < 6; ++e) rc += P("rsn.rowcol.w")(d, e) * oh[e];
      x[i + 1][d] = t + rc;
    }
  }
  for (int64_t d = 0; d < D; ++d) x[0][d] = P("rsn.cls")[d];

  auto layer_norm_rows = [&](const std::vector<std::vector<double>>& in, const Td& g,
                             const Td& s) {
    std::vector<std::vector<double>> out(S, std::vector<double>(D));
    for (int64_t i = 0; i < S; ++i) {
      double m = 0, v = 0;
      for (int64_t d = 0; d < D; ++d) m += in[i][d] / double(D);
      for (int64_t d = 0; d < D; ++d) {
        double c = in[i][d] - m;
        v += c * c / double(D);
      }
      for (int64_t d = 0; d < D; ++d)
        out[i][d] = (in[i][d] - m) / std::sqrt(v + 1e-5) * g[d] + s[d];
    }
    return out;
  };

  int64_t H = cfg.heads, Dh = cfg.d_head, DHm = H * Dh, Dm = cfg.d_mlp;
  for (int64_t l = 0; l < cfg.layers; ++l) {
    std::string b = "rsn.l" + std::to_string(l) + ".";
    auto h1 = layer_norm_rows(x, P(b + "ln1.gain"), P(b + "ln1.shift"));
    // q, k, v packed over heads
    std::vector<std::vector<double>> q(S, std::vector<double>(DHm)), kk = q, vv = q,
                                     ctxv(S, std::vector<double>(DHm, 0.0));
    for (int64_t i = 0; i < S; ++i)
      for (int64_t e = 0; e < DHm; ++e) {
        double aq = P(b + "attn.bq")[e], ak = P(b + "attn.bk")[e], av = P(b + "attn.bv")[e];
        for (int64_t f = 0; f < D; ++f) {
          aq += h1[i][f] * P(b + "attn.wq")(e, f);
          ak += h1[i][f] * P(b + "attn.wk")(e, f);
          av += h1[i][f] * P(b + "attn.wv")(e, f);
        }
        q[i][e] = aq;
        kk[i][e] = ak;
        vv[i][e] = av;
      }
    for (int64_t h = 0; h < H; ++h) {
      for (int64_t i = 0; i < S; ++i) {
        std::vector<double> logits(S);
        double mx = -1e300;
        for (int64_t i2 = 0; i2 < S; ++i2) {
          double acc = 0;
          for (int64_t e = 0; e < Dh; ++e) acc += q[i][h * Dh + e] * kk[i2][h * Dh + e];
          logits[i2] = acc / std::sqrt(double(Dh));
          mx = std::max(mx, logits[i2]);
        }
        double z = 0;
        for (int64_t i2 = 0; i2 < S; ++i2) z += std::exp(logits[i2] - mx);
        for (int64_t i2 = 0; i2 < S; ++i2) {
          double a = std::exp(logits[i2] - mx) / z;
          for (int64_t e = 0; e < Dh; ++e) ctxv[i][h * Dh + e] += a * vv[i2][h * Dh + e];
        }
      }
    }
    for (int64_t i = 0; i < S; ++i)
      for (int64_t d = 0; d < D; ++d) {
        double o = P(b + "attn.bo")[d];
        for (int64_t e = 0; e < DHm; ++e) o += P(b + "attn.wo")(d, e) * ctxv[i][e];
        x[i][d] += o;
      }
    auto h2 = layer_norm_rows(x, P(b + "ln2.gain"), P(b + "ln2.shift"));
    for (int64_t i = 0; i < S; ++i) {
      std::vector<double> hid(Dm);
      for (int64_t m = 0; m < Dm; ++m) {
        double a = P(b + "mlp.b0")[m];
        for (int64_t d = 0; d < D; ++d) a += P(b + "mlp.w0")(m, d) * h2[i][d];
        hid[m] = std::max(0.0, a);
      }
      for (int64_t d = 0; d < D; ++d) {
        double a = P(b + "mlp.b1")[d];
        for (int64_t m = 0; m < Dm; ++m) a += P(b + "mlp.w1")(d, m) * hid[m];
        x[i][d] += a;
      }
    }
  }
  auto f = layer_norm_rows(x, P("rsn.ln_f.gain"), P("rsn.ln_f.shift"));
  double score = P("rsn.head.b")[0];
  for (int64_t d = 0; d < D; ++d) score += P("rsn.head.w")(0, d) * f[0][d];
  return score;
}

}  // namespace

// ---------------------------------------------------------------------------
// Row/col embedding and TCN at reasoning scale
// ---------------------------------------------------------------------------

TEST_CASE("row_col_onehot: panel positions on the 3x3 grid") {
  Td i0 = row_col_onehot<double>(0);
  double e0[6] = {1, 0, 0, 1, 0, 0};
  for (int64_t i = 0; i < 6; ++i) CHECK(i0[i] == e0[i]);
  Td i8 = row_col_onehot<double>(8);
  double e8[6] = {0, 0, 1, 0, 0, 1};
  for (int64_t i = 0; i < 6; ++i) CHECK(i8[i] == e8[i]);
  Td i5 = row_col_onehot<double>(5);
  double e5[6] = {0, 1, 0, 0, 0, 1};
  for (int64_t i = 0; i < 6; ++i) CHECK(i5[i] == e5[i]);
  CHECK_THROWS_AS(row_col_onehot<double>(-1), contract_error);
  CHECK_THROWS_AS(row_col_onehot<double>(9), contract_error);
}

TEST_CASE("tcn over a 9K slot sequence: unit gain yields mean 0 and variance 1") {
  Tape<double> t;
  int64_t K = 9, D = 32;
  auto seq = t.constant(rnd({8, 9 * K, D}, 201));
  auto g = t.constant(Td::ones({D}));
  auto s = t.constant(Td::zeros({D}));
  Td out = tcn(seq, g, s, 1).val();
  for (int64_t b = 0; b < 8; ++b)
    for (int64_t d = 0; d < D; ++d) {
      double m = 0, v = 0;
      for (int64_t i = 0; i < 9 * K; ++i) m += out(b, i, d) / double(9 * K);
      for (int64_t i = 0; i < 9 * K; ++i) {
        double c = out(b, i, d) - m;
        v += c * c / double(9 * K);
      }
      CHECK(std::abs(m) <= 1e-5);
      CHECK(std::abs(v - 1.0) <= 1e-3);
    }
}

// ---------------------------------------------------------------------------
// score_candidates against the scalar reference
// ---------------------------------------------------------------------------

TEST_CASE("score_candidates: micro instance matches the scalar reference") {
  ReasonerConfig cfg = micro_reasoner();
  ParamStore<double> store;
  Rng rng(101);
  register_reasoner_params(store, cfg, rng);
  Td ctx = rnd({8, 2, 4}, 102);
  Td cand = rnd({8, 2, 4}, 103);

  Tape<double> tape;
  BoundParams<double> p(store, tape, false);
  Td scores =
      score_candidates(cfg, p, tape.constant(ctx), tape.constant(cand), nullptr).val();
  CHECK(scores.shape() == Shape{8});
  for (int64_t j = 0; j < 8; ++j)
    CHECK(scores[j] == doctest::Approx(reference_score(store, cfg, ctx, cand, j)).epsilon(1e-4));
}

TEST_CASE("score_candidates: multi-head and multi-layer variant matches the reference") {
  ReasonerConfig cfg;
  cfg.d_slot = 4;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.d_head = 3;
  cfg.d_mlp = 6;
  cfg.dropout = 0.0;
  ParamStore<double> store;
  Rng rng(104);
  register_reasoner_params(store, cfg, rng);
  Td ctx = rnd({8, 1, 4}, 105);
  Td cand = rnd({8, 1, 4}, 106);

  Tape<double> tape;
  BoundParams<double> p(store, tape, false);
  Td scores =
      score_candidates(cfg, p, tape.constant(ctx), tape.constant(cand), nullptr).val();
  for (int64_t j = 0; j < 8; ++j)
    CHECK(scores[j] == doctest::Approx(reference_score(store, cfg, ctx, cand, j)).epsilon(1e-9));
}

TEST_CASE("score_candidates: disabling TCN skips the normalization stage") {
  ReasonerConfig with = micro_reasoner();
  ReasonerConfig without = with;
  without.use_tcn = false;
  ParamStore<double> store;
  Rng rng(107);
  register_reasoner_params(store, with, rng);
  Td ctx = rnd({8, 2, 4}, 108);
  Td cand = rnd({8, 2, 4}, 109);
  Tape<double> tape;
  BoundParams<double> p(store, tape, false);
  Td a = score_candidates(with, p, tape.constant(ctx), tape.constant(cand), nullptr).val();
  Td b = score_candidates(without, p, tape.constant(ctx), tape.constant(cand), nullptr).val();
  for (int64_t j = 0; j < 8; ++j)
    CHECK(b[j] == doctest::Approx(reference_score(store, without, ctx, cand, j)).epsilon(1e-9));
  double diff = 0;
  for (int64_t j = 0; j < 8; ++j) diff += std::abs(a[j] - b[j]);
  CHECK(diff > 1e-6);
}

TEST_CASE("score_candidates: rejects malformed slot stacks") {
  ReasonerConfig cfg = micro_reasoner();
  ParamStore<double> store;
  Rng rng(110);
  register_reasoner_params(store, cfg, rng);
  Tape<double> tape;
  BoundParams<double> p(store, tape, false);
  CHECK_THROWS_AS(score_candidates(cfg, p, tape.constant(rnd({7, 2, 4}, 1)),
                                   tape.constant(rnd({8, 2, 4}, 2)), nullptr),
                  shape_error);
  CHECK_THROWS_AS(score_candidates(cfg, p, tape.constant(rnd({8, 2, 4}, 1)),
                                   tape.constant(rnd({8, 2, 5}, 2)), nullptr),
                  shape_error);
}

// ---------------------------------------------------------------------------
// Symmetries
// ---------------------------------------------------------------------------

TEST_CASE("score_candidates: within-panel slot permutation leaves scores unchanged") {
  ReasonerConfig cfg = micro_reasoner();
  ParamStore<double> store;
  Rng rng(111);
  register_reasoner_params(store, cfg, rng);
  Td ctx = rnd({8, 2, 4}, 112);
  Td cand = rnd({8, 2, 4}, 113);

  Td ctx_p = ctx, cand_p = cand;
  for (int64_t panel = 0; panel < 8; ++panel)  // swap the two slots everywhere
    for (int64_t d = 0; d < 4; ++d) {
      std::swap(ctx_p.vec()[(panel * 2 + 0) * 4 + d], ctx_p.vec()[(panel * 2 + 1) * 4 + d]);
      std::swap(cand_p.vec()[(panel * 2 + 0) * 4 + d], cand_p.vec()[(panel * 2 + 1) * 4 + d]);
    }

  Tape<double> tape;
  BoundParams<double> p(store, tape, false);
  Td a = score_candidates(cfg, p, tape.constant(ctx), tape.constant(cand), nullptr).val();
  Td b = score_candidates(cfg, p, tape.constant(ctx_p), tape.constant(cand_p), nullptr).val();
  for (int64_t j = 0; j < 8; ++j) CHECK(a[j] == doctest::Approx(b[j]).epsilon(1e-10));
}

TEST_CASE("score_candidates: permuting candidates permutes the scores exactly") {
  ReasonerConfig cfg = micro_reasoner();
  ParamStore<double> store;
  Rng rng(114);
  register_reasoner_params(store, cfg, rng);
  Td ctx = rnd({8, 2, 4}, 115);
  Td cand = rnd({8, 2, 4}, 116);
  int64_t perm[8] = {3, 1, 7, 0, 5, 2, 6, 4};
  Td cand_p({8, 2, 4});
  for (int64_t j = 0; j < 8; ++j)
    for (int64_t k = 0; k < 2; ++k)
      for (int64_t d = 0; d < 4; ++d) cand_p(j, k, d) = cand(perm[j], k, d);

  Tape<double> tape;
  BoundParams<double> p(store, tape, false);
  Td a = score_candidates(cfg, p, tape.constant(ctx), tape.constant(cand), nullptr).val();
  Td b = score_candidates(cfg, p, tape.constant(ctx), tape.constant(cand_p), nullptr).val();
  for (int64_t j = 0; j < 8; ++j) CHECK(b[j] == a[perm[j]]);
}

TEST_CASE("predict: identical candidates give the uniform distribution") {
  ReasonerConfig cfg = micro_reasoner();
  ParamStore<double> store;
  Rng rng(117);
  register_reasoner_params(store, cfg, rng);
  Td ctx = rnd({8, 2, 4}, 118);
  Td one = rnd({1, 2, 4}, 119);
  Td cand({8, 2, 4});
  for (int64_t j = 0; j < 8; ++j)
    for (int64_t i = 0; i < 8; ++i) cand.vec()[j * 8 + i] = one[i];

  Tape<double> tape;
  BoundParams<double> p(store, tape, false);
  Vd scores = score_candidates(cfg, p, tape.constant(ctx), tape.constant(cand), nullptr);
  Td yhat = predict(scores).val();
  double total = 0;
  for (int64_t j = 0; j < 8; ++j) {
    CHECK(yhat[j] == doctest::Approx(0.125).epsilon(1e-9));
    total += yhat[j];
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("predict: distribution sums to 1; argmax invariant under monotone maps") {
  Tape<double> t;
  Td s = rnd({8}, 120);
  Vd scores = t.constant(s);
  Td yhat = predict(scores).val();
  double total = 0;
  for (int64_t j = 0; j < 8; ++j) total += yhat[j];
  CHECK(total == doctest::Approx(1.0).epsilon(1e-6));

  Td mono({8});
  for (int64_t j = 0; j < 8; ++j) mono[j] = 2.0 * s[j] + 5.0;
  CHECK(argmax_score(s) == argmax_score(mono));
  CHECK_THROWS_AS(predict(t.constant(rnd({7}, 1))), shape_error);
}

// ---------------------------------------------------------------------------
// Dropout behavior
// ---------------------------------------------------------------------------

TEST_CASE("score_candidates: dropout only acts in training mode with p > 0") {
  ReasonerConfig cfg = micro_reasoner();
  cfg.dropout = 0.3;
  ParamStore<double> store;
  Rng rng(121);
  register_reasoner_params(store, cfg, rng);
  Td ctx = rnd({8, 2, 4}, 122);
  Td cand = rnd({8, 2, 4}, 123);
  Tape<double> tape;
  BoundParams<double> p(store, tape, false);
  auto eval = [&](ReasonerConfig c, Rng* r) {
    return score_candidates(c, p, tape.constant(ctx), tape.constant(cand), r).val();
  };
  Td eval_mode = eval(cfg, nullptr);
  Td eval_mode2 = eval(cfg, nullptr);
  for (int64_t j = 0; j < 8; ++j) CHECK(eval_mode[j] == eval_mode2[j]);

  Rng dr(9);
  Td train_mode = eval(cfg, &dr);
  double diff = 0;
  for (int64_t j = 0; j < 8; ++j) diff += std::abs(train_mode[j] - eval_mode[j]);
  CHECK(diff > 1e-9);

  ReasonerConfig dropless = cfg;
  dropless.dropout = 0.0;
  Rng dr2(9);
  Td off = eval(dropless, &dr2);
  for (int64_t j = 0; j < 8; ++j) CHECK(off[j] == eval_mode[j]);
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

TEST_CASE("task_loss: uniform scores cost ln 8; saturation costs ~0") {
  Tape<double> t;
  Vd uniform = t.constant(Td::full({8}, 1.3));
  for (int64_t y : {0L, 5L, 7L})
    CHECK(task_loss(uniform, y).val()[0] == doctest::Approx(2.0794415416798357).epsilon(1e-12));

  Td sat = Td::zeros({8});
  sat[2] = 40.0;
  CHECK(task_loss(t.constant(sat), 2).val()[0] < 1e-12);

  CHECK_THROWS_AS(task_loss(uniform, -1), contract_error);
  CHECK_THROWS_AS(task_loss(uniform, 8), contract_error);
  CHECK_THROWS_AS(task_loss(t.constant(rnd({7}, 1)), 0), shape_error);
}

TEST_CASE("task_loss: random logits match the scalar cross entropy") {
  Tape<double> t;
  Td s = rnd({8}, 124);
  for (int64_t y = 0; y < 8; ++y) {
    double mx = s[0];
    for (int64_t j = 1; j < 8; ++j) mx = std::max(mx, s[j]);
    double z = 0;
    for (int64_t j = 0; j < 8; ++j) z += std::exp(s[j] - mx);
    double ref = -std::log(std::exp(s[y] - mx) / z);
    CHECK(task_loss(t.constant(s), y).val()[0] == doctest::Approx(ref).epsilon(1e-6));
  }
}

TEST_CASE("total_loss: weighted combination and edge cases") {
  Tape<double> t;
  Vd recon = t.constant(Td::scalar(0.001));
  Vd task = t.constant(Td::scalar(2.0794));
  CHECK(total_loss(recon, task, 1000.0).val()[0] == doctest::Approx(3.0794).epsilon(1e-12));
  CHECK(total_loss(recon, task, 0.0).val()[0] == doctest::Approx(2.0794).epsilon(1e-12));
  CHECK_THROWS_AS(total_loss(recon, task, -1.0), contract_error);
  CHECK_THROWS_AS(total_loss(t.constant(rnd({2}, 1)), task, 1.0), shape_error);
}

// ---------------------------------------------------------------------------
// Full model
// ---------------------------------------------------------------------------

TEST_CASE("model config: presets validate; inconsistencies are rejected") {
  ModelConfig::full80().validate();
  ModelConfig::full128().validate();
  ModelConfig::desk().validate();
  ModelConfig::micro().validate();

  ModelConfig bad = ModelConfig::micro();
  bad.slots.d_slot = 8;
  CHECK_THROWS_AS(bad.validate(), contract_error);
  ModelConfig bad2 = ModelConfig::micro();
  bad2.encoder.d_inputs = 16;
  CHECK_THROWS_AS(bad2.validate(), contract_error);
  ModelConfig bad3 = ModelConfig::micro();
  bad3.lambda = -2.0;
  CHECK_THROWS_AS(bad3.validate(), contract_error);
  ModelConfig bad4 = ModelConfig::micro();
  bad4.decoder.image_h = 16;
  CHECK_THROWS_AS(bad4.validate(), contract_error);
}

TEST_CASE("model: seeded construction is reproducible and covers all modules") {
  StsnModel<double> a(ModelConfig::micro(), 77);
  StsnModel<double> b(ModelConfig::micro(), 77);
  StsnModel<double> c(ModelConfig::micro(), 78);
  REQUIRE(a.params().size() == b.params().size());
  bool all_same = true, any_diff = false;
  for (size_t i = 0; i < a.params().size(); ++i) {
    const Td& pa = a.params().entry(i).value;
    const Td& pb = b.params().entry(i).value;
    const Td& pc = c.params().entry(i).value;
    for (int64_t e = 0; e < pa.numel(); ++e) {
      all_same = all_same && pa[e] == pb[e];
      any_diff = any_diff || pa[e] != pc[e];
    }
  }
  CHECK(all_same);
  CHECK(any_diff);
  CHECK(a.params().has("enc.conv0.w"));
  CHECK(a.params().has("sa.mu"));
  CHECK(a.params().has("dec.out.w"));
  CHECK(a.params().has("rsn.cls"));
}

TEST_CASE("model forward: shapes, loss decomposition, and determinism") {
  StsnModel<double> model(ModelConfig::micro(), 79);
  Td images = rnd({16, 1, 8, 8}, 130, 0.0, 1.0);

  auto run = [&]() {
    Tape<double> tape;
    BoundParams<double> p(model.params(), tape, false);
    Rng sr(12);
    ForwardResult<double> out = model.forward(tape, p, images, 3, &sr, nullptr);
    return std::tuple<Td, Td, double, double, double, int64_t, Td, Td>(
        out.scores.val(), out.recon.val(), out.total.val()[0], out.recon_loss.val()[0],
        out.task_loss.val()[0], out.prediction, out.masks.val(), out.attn.val());
  };
  auto [scores, recon, total, rl, tl, pred, masks, attn] = run();
  CHECK(scores.shape() == Shape{8});
  CHECK(recon.shape() == Shape{16, 1, 8, 8});
  CHECK(masks.shape() == Shape{16, 2, 1, 8, 8});
  CHECK(attn.shape() == Shape{16, 2, 16});
  CHECK(recon.all_finite());
  CHECK(total == doctest::Approx(1000.0 * rl + tl).epsilon(1e-5));
  CHECK(pred >= 0);
  CHECK(pred <= 7);
  CHECK(pred == argmax_score(scores));

  auto [scores2, recon2, total2, rl2, tl2, pred2, masks2, attn2] = run();
  CHECK(total == total2);
  for (int64_t j = 0; j < 8; ++j) CHECK(scores[j] == scores2[j]);
  for (int64_t i = 0; i < recon.numel(); ++i) CHECK(recon[i] == recon2[i]);
}

TEST_CASE("model forward: no_slot_attention collapses each panel to one slot") {
  ModelConfig cfg = ModelConfig::micro();
  cfg.no_slot_attention = true;
  StsnModel<double> model(cfg, 80);
  Td images = rnd({16, 1, 8, 8}, 131, 0.0, 1.0);
  Tape<double> tape;
  BoundParams<double> p(model.params(), tape, false);
  ForwardResult<double> out = model.forward(tape, p, images, 0, nullptr, nullptr);
  CHECK(out.slots.shape() == Shape{16, 1, 4});
  CHECK(out.masks.shape() == Shape{16, 1, 1, 8, 8});
  CHECK(out.scores.shape() == Shape{8});
  CHECK(out.recon.val().all_finite());
}

TEST_CASE("model forward: input validation") {
  StsnModel<double> model(ModelConfig::micro(), 81);
  Tape<double> tape;
  BoundParams<double> p(model.params(), tape, false);
  CHECK_THROWS_AS(model.forward(tape, p, rnd({15, 1, 8, 8}, 1, 0, 1), 0, nullptr, nullptr),
                  shape_error);
  CHECK_THROWS_AS(model.forward(tape, p, rnd({16, 1, 8, 8}, 1, 0, 1), 9, nullptr, nullptr),
                  contract_error);
}

TEST_CASE("model: end-to-end finite differences through the whole loss") {
  StsnModel<double> model(ModelConfig::micro(), 82);
  Td images = rnd({16, 1, 8, 8}, 132, 0.0, 1.0);
  auto loss = [&](Tape<double>& tape, const BoundParams<double>& p) {
    Rng sr(21);  // identical slot noise on every call
    return model.forward(tape, p, images, 5, &sr, nullptr).total;
  };
  // Step 1e-6 balances truncation against cancellation on the lambda-scaled
  // loss; floor 5e-6 absorbs its ~2e-6 absolute FD resolution limit.
  FdReport rep = parameter_fd_check(model.params(), loss, 1e-6, 0, 5e-6);
  CAPTURE(rep.max_rel_err);
  CAPTURE(rep.checked);
  CHECK(rep.checked == model.params().scalar_count());
  CHECK(rep.ok(1e-3));
}
