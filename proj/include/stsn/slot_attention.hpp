#pragma once

#include <cmath>
#include <utility>

#include "stsn/encoder.hpp"
#include "stsn/nn.hpp"
#include "stsn/ops.hpp"
#include "stsn/param.hpp"
#include "stsn/rng.hpp"

namespace stsn {

/**
 * Slot attention: K slots drawn from a learned Gaussian iteratively compete
 * for input locations (softmax over slots), pool values with a per-slot
 * renormalized weighted mean, and update through a shared GRU + residual MLP.
 */
struct SlotAttentionConfig {
  int64_t k_slots = 9;
  int64_t d_slot = 32;
  int64_t d_inputs = 32;
  int64_t t_iters = 3;
  double renorm_eps = 1e-8;
};

template <typename Scalar>
struct SlotsAndAttention {
  Var<Scalar> slots;  // [B, K, d_slot]
  Var<Scalar> attn;   // [B, K, N], each location's weights sum to 1 over slots
};

template <typename Scalar>
void register_slot_attention_params(ParamStore<Scalar>& store, const SlotAttentionConfig& cfg,
                                    Rng& rng) {
  int64_t d = cfg.d_slot, din = cfg.d_inputs;
  store.add("sa.mu", detail::uniform_fan_in<Scalar>({d}, d, rng));
  store.add("sa.log_sigma", Tensor<Scalar>::zeros({d}));
  store.add("sa.ln_in.gain", Tensor<Scalar>::ones({din}));
  store.add("sa.ln_in.shift", Tensor<Scalar>::zeros({din}));
  store.add("sa.ln_slots.gain", Tensor<Scalar>::ones({d}));
  store.add("sa.ln_slots.shift", Tensor<Scalar>::zeros({d}));
  store.add("sa.q.w", detail::uniform_fan_in<Scalar>({d, d}, d, rng));
  store.add("sa.k.w", detail::uniform_fan_in<Scalar>({d, din}, din, rng));
  store.add("sa.v.w", detail::uniform_fan_in<Scalar>({d, din}, din, rng));
  store.add("sa.gru.w_ih", detail::uniform_fan_in<Scalar>({3 * d, d}, d, rng));
  store.add("sa.gru.w_hh", detail::uniform_fan_in<Scalar>({3 * d, d}, d, rng));
  store.add("sa.gru.b_ih", detail::uniform_fan_in<Scalar>({3 * d}, d, rng));
  store.add("sa.gru.b_hh", detail::uniform_fan_in<Scalar>({3 * d}, d, rng));
  store.add("sa.ln_mlp.gain", Tensor<Scalar>::ones({d}));
  store.add("sa.ln_mlp.shift", Tensor<Scalar>::zeros({d}));
  store.add("sa.mlp.w0", detail::uniform_fan_in<Scalar>({d, d}, d, rng));
  store.add("sa.mlp.b0", detail::uniform_fan_in<Scalar>({d}, d, rng));
  store.add("sa.mlp.w1", detail::uniform_fan_in<Scalar>({d, d}, d, rng));
  store.add("sa.mlp.b1", detail::uniform_fan_in<Scalar>({d}, d, rng));
}

/**
 * Draw initial slots. With `rng` non-null each slot is mu + sigma ⊙ N(0,1)
 * (sigma = exp(log_sigma), so always positive); with `rng` null the
 * deterministic mean mu is used for every slot (evaluation mode).
 */
template <typename Scalar>
Var<Scalar> init_slots(const SlotAttentionConfig& cfg, const BoundParams<Scalar>& p,
                       Tape<Scalar>& tape, int64_t batch, Rng* rng) {
  if (cfg.k_slots < 1) throw contract_error("need at least one slot");
  Var<Scalar> mu = p["sa.mu"];
  Shape target{batch, cfg.k_slots, cfg.d_slot};
  if (!rng) return broadcast_to(reshape(mu, {1, 1, cfg.d_slot}), target);
  Tensor<Scalar> noise(target);
  for (int64_t i = 0; i < noise.numel(); ++i) noise[i] = static_cast<Scalar>(rng->normal());
  Var<Scalar> sigma = exp(p["sa.log_sigma"]);  // [d]
  return add(mul(sigma, tape.constant(std::move(noise))), mu);
}

/**
 * One attention iteration over a batch of panels. `k_in`/`v_in` are the
 * key/value projections of the (layer-normed) encoder features, computed once
 * by the caller since they do not change across iterations.
 */
template <typename Scalar>
SlotsAndAttention<Scalar> slot_attention_step(const SlotAttentionConfig& cfg,
                                              const BoundParams<Scalar>& p, Var<Scalar> slots,
                                              Var<Scalar> k_in, Var<Scalar> v_in) {
  int64_t b = slots.dim(0), k = slots.dim(1), d = cfg.d_slot;
  if (slots.dim(2) != d || k_in.dim(2) != d || v_in.dim(2) != d)
    throw shape_error("slot attention width mismatch");
  Var<Scalar> slots_ln = layer_norm(slots, p["sa.ln_slots.gain"], p["sa.ln_slots.shift"]);
  Var<Scalar> q = linear(slots_ln, p["sa.q.w"]);  // [B, K, d]
  Var<Scalar> logits = scale(bmm(q, k_in, false, true),
                             Scalar(1.0 / std::sqrt(double(d))));  // [B, K, N]
  if (!logits.val().all_finite()) throw numeric_error("non-finite attention logits");
  Var<Scalar> attn = softmax(logits, 1);  // competition among slots per location
  // weighted mean: renormalize each slot's weights over locations
  Var<Scalar> denom = add_scalar(sum(attn, 2, true), Scalar(cfg.renorm_eps));
  Var<Scalar> wn = div(attn, denom);
  Var<Scalar> updates = bmm(wn, v_in);  // [B, K, d]
  Var<Scalar> new_slots = reshape(gru_cell(reshape(slots, {b * k, d}), reshape(updates, {b * k, d}),
                                           p["sa.gru.w_ih"], p["sa.gru.w_hh"], p["sa.gru.b_ih"],
                                           p["sa.gru.b_hh"]),
                                  {b, k, d});
  Var<Scalar> h = layer_norm(new_slots, p["sa.ln_mlp.gain"], p["sa.ln_mlp.shift"]);
  h = linear(relu(linear(h, p["sa.mlp.w0"], p["sa.mlp.b0"])), p["sa.mlp.w1"], p["sa.mlp.b1"]);
  return {add(new_slots, h), attn};
}

/**
 * Full panel -> slots pipeline: encode, project keys/values once, run
 * t_iters attention iterations from a fresh slot initialization.
 */
template <typename Scalar>
SlotsAndAttention<Scalar> encode_to_slots(const EncoderConfig& enc, const SlotAttentionConfig& cfg,
                                          const BoundParams<Scalar>& p, Var<Scalar> imgs,
                                          const Tensor<Scalar>& pos_feats, Rng* rng) {
  Tape<Scalar>& tape = *imgs.tape;
  int64_t b = imgs.dim(0), n = enc.n_locations();
  Var<Scalar> features = encode_panels(enc, p, imgs, pos_feats);
  Var<Scalar> f_ln = layer_norm(features, p["sa.ln_in.gain"], p["sa.ln_in.shift"]);
  Var<Scalar> k_in = linear(f_ln, p["sa.k.w"]);
  Var<Scalar> v_in = linear(f_ln, p["sa.v.w"]);
  Var<Scalar> slots = init_slots(cfg, p, tape, b, rng);
  if (cfg.t_iters == 0) {
    // no iterations: slots stay at their initialization, attention undefined;
    // report the uniform distribution each location would start from
    Var<Scalar> attn = tape.constant(
        Tensor<Scalar>::full({b, cfg.k_slots, n}, Scalar(1.0 / double(cfg.k_slots))));
    return {slots, attn};
  }
  SlotsAndAttention<Scalar> out{slots, slots};
  for (int64_t it = 0; it < cfg.t_iters; ++it)
    out = slot_attention_step(cfg, p, it == 0 ? slots : out.slots, k_in, v_in);
  return out;
}

/**
 * Slot-free baseline: each panel is summarized by the plain mean of its value
 * embeddings (a single slot, no competition). Shapes mirror encode_to_slots
 * with K = 1.
 */
template <typename Scalar>
SlotsAndAttention<Scalar> encode_to_mean_embedding(const EncoderConfig& enc,
                                                   const SlotAttentionConfig& cfg,
                                                   const BoundParams<Scalar>& p,
                                                   Var<Scalar> imgs,
                                                   const Tensor<Scalar>& pos_feats) {
  Tape<Scalar>& tape = *imgs.tape;
  int64_t b = imgs.dim(0), n = enc.n_locations();
  Var<Scalar> features = encode_panels(enc, p, imgs, pos_feats);
  Var<Scalar> f_ln = layer_norm(features, p["sa.ln_in.gain"], p["sa.ln_in.shift"]);
  Var<Scalar> v_in = linear(f_ln, p["sa.v.w"]);              // [B, N, d]
  Var<Scalar> slots = reshape(mean(v_in, 1), {b, 1, cfg.d_slot});
  Var<Scalar> attn = tape.constant(Tensor<Scalar>::full({b, 1, n}, Scalar(1)));
  return {slots, attn};
}

}  // namespace stsn
