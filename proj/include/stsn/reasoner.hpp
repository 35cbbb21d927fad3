#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "stsn/nn.hpp"
#include "stsn/ops.hpp"
#include "stsn/param.hpp"
#include "stsn/rng.hpp"

namespace stsn {

/**
 * Transformer scoring module. For each of the 8 candidates, the slots of the
 * 8 context panels plus the candidate's slots are flattened into one 9K
 * sequence, normalized with TCN, tagged with row/column embeddings, prefixed
 * with a CLS token, and passed through a pre-norm transformer; a linear head
 * on the transformed CLS yields the candidate's scalar score.
 */
struct ReasonerConfig {
  int64_t d_slot = 32;
  int64_t layers = 6;
  int64_t heads = 8;
  int64_t d_head = 32;
  int64_t d_mlp = 512;
  double dropout = 0.1;
  bool use_tcn = true;
};

/// Concatenated 3-way row and column one-hots for the panel occupying slot
/// sequence position `index`: 0..7 are context cells in row-major order,
/// 8 is the candidate sitting in the bottom-right cell (2,2).
template <typename Scalar>
Tensor<Scalar> row_col_onehot(int64_t index) {
  if (index < 0 || index > 8)
    throw contract_error("panel index " + std::to_string(index) + " outside 0..8");
  int64_t row = index / 3, col = index % 3;  // index 8 lands on (2,2) directly
  Tensor<Scalar> v({6});
  v[row] = Scalar(1);
  v[3 + col] = Scalar(1);
  return v;
}

template <typename Scalar>
void register_reasoner_params(ParamStore<Scalar>& store, const ReasonerConfig& cfg, Rng& rng) {
  int64_t d = cfg.d_slot;
  store.add("rsn.tcn.gain", Tensor<Scalar>::ones({d}));
  store.add("rsn.tcn.shift", Tensor<Scalar>::zeros({d}));
  store.add("rsn.rowcol.w", detail::uniform_fan_in<Scalar>({d, 6}, 6, rng));
  store.add("rsn.rowcol.b", detail::uniform_fan_in<Scalar>({d}, 6, rng));
  store.add("rsn.cls", detail::uniform_fan_in<Scalar>({d}, d, rng));
  int64_t dh = cfg.heads * cfg.d_head;
  for (int64_t l = 0; l < cfg.layers; ++l) {
    std::string b = "rsn.l" + std::to_string(l) + ".";
    store.add(b + "ln1.gain", Tensor<Scalar>::ones({d}));
    store.add(b + "ln1.shift", Tensor<Scalar>::zeros({d}));
    store.add(b + "attn.wq", detail::uniform_fan_in<Scalar>({dh, d}, d, rng));
    store.add(b + "attn.bq", detail::uniform_fan_in<Scalar>({dh}, d, rng));
    store.add(b + "attn.wk", detail::uniform_fan_in<Scalar>({dh, d}, d, rng));
    store.add(b + "attn.bk", detail::uniform_fan_in<Scalar>({dh}, d, rng));
    store.add(b + "attn.wv", detail::uniform_fan_in<Scalar>({dh, d}, d, rng));
    store.add(b + "attn.bv", detail::uniform_fan_in<Scalar>({dh}, d, rng));
    store.add(b + "attn.wo", detail::uniform_fan_in<Scalar>({d, dh}, dh, rng));
    store.add(b + "attn.bo", detail::uniform_fan_in<Scalar>({d}, dh, rng));
    store.add(b + "ln2.gain", Tensor<Scalar>::ones({d}));
    store.add(b + "ln2.shift", Tensor<Scalar>::zeros({d}));
    store.add(b + "mlp.w0", detail::uniform_fan_in<Scalar>({cfg.d_mlp, d}, d, rng));
    store.add(b + "mlp.b0", detail::uniform_fan_in<Scalar>({cfg.d_mlp}, d, rng));
    store.add(b + "mlp.w1", detail::uniform_fan_in<Scalar>({d, cfg.d_mlp}, cfg.d_mlp, rng));
    store.add(b + "mlp.b1", detail::uniform_fan_in<Scalar>({d}, cfg.d_mlp, rng));
  }
  store.add("rsn.ln_f.gain", Tensor<Scalar>::ones({d}));
  store.add("rsn.ln_f.shift", Tensor<Scalar>::zeros({d}));
  store.add("rsn.head.w", detail::uniform_fan_in<Scalar>({1, d}, d, rng));
  store.add("rsn.head.b", detail::uniform_fan_in<Scalar>({1}, d, rng));
}

namespace detail {

/// Multi-head self-attention over x [B, S, D]; dropout on attention weights.
template <typename Scalar>
Var<Scalar> self_attention(const ReasonerConfig& cfg, const BoundParams<Scalar>& p,
                           const std::string& base, Var<Scalar> x, Rng* dropout_rng) {
  int64_t b = x.dim(0), s = x.dim(1);
  int64_t h = cfg.heads, dh = cfg.d_head;
  auto split_heads = [&](Var<Scalar> t) {
    return reshape(permute(reshape(t, {b, s, h, dh}), {0, 2, 1, 3}), {b * h, s, dh});
  };
  Var<Scalar> q = split_heads(linear(x, p[base + "attn.wq"], p[base + "attn.bq"]));
  Var<Scalar> k = split_heads(linear(x, p[base + "attn.wk"], p[base + "attn.bk"]));
  Var<Scalar> v = split_heads(linear(x, p[base + "attn.wv"], p[base + "attn.bv"]));
  Var<Scalar> logits = scale(bmm(q, k, false, true), Scalar(1.0 / std::sqrt(double(dh))));
  Var<Scalar> attn = softmax(logits, 2);
  if (dropout_rng && cfg.dropout > 0.0) attn = dropout(attn, cfg.dropout, *dropout_rng);
  Var<Scalar> ctx = bmm(attn, v);  // [BH, S, dh]
  ctx = reshape(permute(reshape(ctx, {b, h, s, dh}), {0, 2, 1, 3}), {b, s, h * dh});
  return linear(ctx, p[base + "attn.wo"], p[base + "attn.bo"]);
}

}  // namespace detail

/**
 * Pre-norm transformer encoder over x [B, S, D]:
 *   x += attn(LN(x)); x += mlp(LN(x)); ... ; return LN_f(x).
 * Dropout (training only, rng non-null) on attention weights and on the MLP
 * hidden activations.
 */
template <typename Scalar>
Var<Scalar> transformer(const ReasonerConfig& cfg, const BoundParams<Scalar>& p, Var<Scalar> x,
                        Rng* dropout_rng) {
  for (int64_t l = 0; l < cfg.layers; ++l) {
    std::string base = "rsn.l" + std::to_string(l) + ".";
    Var<Scalar> h1 = layer_norm(x, p[base + "ln1.gain"], p[base + "ln1.shift"]);
    x = add(x, detail::self_attention(cfg, p, base, h1, dropout_rng));
    Var<Scalar> h2 = layer_norm(x, p[base + "ln2.gain"], p[base + "ln2.shift"]);
    h2 = relu(linear(h2, p[base + "mlp.w0"], p[base + "mlp.b0"]));
    if (dropout_rng && cfg.dropout > 0.0) h2 = dropout(h2, cfg.dropout, *dropout_rng);
    x = add(x, linear(h2, p[base + "mlp.w1"], p[base + "mlp.b1"]));
  }
  return layer_norm(x, p["rsn.ln_f.gain"], p["rsn.ln_f.shift"]);
}

/**
 * Score all 8 candidates at once. context [8, K, D] and candidates [8, K, D]
 * (one row per candidate evaluation reuses the same context). Returns the
 * score vector [8].
 */
template <typename Scalar>
Var<Scalar> score_candidates(const ReasonerConfig& cfg, const BoundParams<Scalar>& p,
                             Var<Scalar> context, Var<Scalar> candidates, Rng* dropout_rng) {
  if (context.rank() != 3 || candidates.rank() != 3 || context.dim(0) != 8 ||
      candidates.dim(0) != 8 || context.dim(1) != candidates.dim(1) ||
      context.dim(2) != cfg.d_slot || candidates.dim(2) != cfg.d_slot)
    throw shape_error("score_candidates needs context [8,K,D] and candidates [8,K,D], got " +
                      shape_str(context.shape()) + " and " + shape_str(candidates.shape()));
  Tape<Scalar>& tape = *context.tape;
  int64_t k = context.dim(1), d = cfg.d_slot;
  int64_t seq_len = 9 * k;
  // the 8 context panels form one shared 8K-slot prefix, tiled per candidate
  Var<Scalar> ctx_flat = broadcast_to(reshape(context, {1, 8 * k, d}), {8, 8 * k, d});
  Var<Scalar> seq = concat<Scalar>({ctx_flat, candidates}, 1);
  if (cfg.use_tcn)
    seq = tcn(seq, p["rsn.tcn.gain"], p["rsn.tcn.shift"], 1);  // stats over the 9K slots

  // per-position row/col one-hots: slot i belongs to panel i/K
  Tensor<Scalar> onehots({seq_len, 6});
  for (int64_t i = 0; i < seq_len; ++i) {
    Tensor<Scalar> v = row_col_onehot<Scalar>(i / k);
    for (int64_t j = 0; j < 6; ++j) onehots(i, j) = v[j];
  }
  Var<Scalar> rc = linear(tape.constant(std::move(onehots)), p["rsn.rowcol.w"],
                          p["rsn.rowcol.b"]);  // [9K, D]
  seq = add(seq, rc);

  Var<Scalar> cls = broadcast_to(reshape(p["rsn.cls"], {1, 1, d}), {8, 1, d});
  seq = concat<Scalar>({cls, seq}, 1);  // [8, 9K+1, D], CLS first
  Var<Scalar> out = transformer(cfg, p, seq, dropout_rng);
  Var<Scalar> cls_out = reshape(slice(out, 1, 0, 1), {8, d});
  return reshape(linear(cls_out, p["rsn.head.w"], p["rsn.head.b"]), {8});
}

/// Softmax distribution over the 8 candidate scores.
template <typename Scalar>
Var<Scalar> predict(Var<Scalar> scores) {
  if (scores.shape() != Shape{8}) throw shape_error("predict expects 8 scores");
  return softmax(scores, 0);
}

template <typename Scalar>
int64_t argmax_score(const Tensor<Scalar>& scores) {
  int64_t best = 0;
  for (int64_t i = 1; i < scores.numel(); ++i)
    if (scores[i] > scores[best]) best = i;
  return best;
}

/// Cross entropy -log softmax(scores)[y], computed stably from the logits.
template <typename Scalar>
Var<Scalar> task_loss(Var<Scalar> scores, int64_t y) {
  if (scores.shape() != Shape{8}) throw shape_error("task_loss expects 8 scores");
  if (y < 0 || y > 7) throw contract_error("answer index " + std::to_string(y) + " outside 0..7");
  Var<Scalar> lse = logsumexp(scores, 0);
  Var<Scalar> target = reshape(slice(scores, 0, y, 1), Shape{});
  return sub(lse, target);
}

/// L = lambda * recon + task.
template <typename Scalar>
Var<Scalar> total_loss(Var<Scalar> recon, Var<Scalar> task, double lambda) {
  if (lambda < 0.0) throw contract_error("loss weight must be non-negative");
  if (recon.rank() != 0 || task.rank() != 0) throw shape_error("loss terms must be scalars");
  return add(scale(recon, static_cast<Scalar>(lambda)), task);
}

}  // namespace stsn
