#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include "stsn/encoder.hpp"
#include "stsn/reasoner.hpp"
#include "stsn/rng.hpp"
#include "stsn/slot_attention.hpp"
#include "stsn/slot_decoder.hpp"

namespace stsn {

/**
 * Full model configuration. Presets:
 *  - full80():  80x80 grayscale reference stack (32-channel encoder, K=9,
 *               D_slot=32, 6-layer reasoner with dropout 0.1).
 *  - full128(): 128x128 RGB stack (64-channel encoder, D_slot=64, 5 hidden
 *               decoder convs, 24-layer reasoner).
 *  - desk():    48x48 grayscale stack sized for single-core CPU training
 *               (strided encoder, pointwise fused decoder stem, K=9,
 *               D_slot=32, 2-layer reasoner).
 *  - micro():   8x8 jig for end-to-end gradient checks (K=2, D_slot=4,
 *               1-layer 1-head reasoner).
 */
struct ModelConfig {
  EncoderConfig encoder;
  SlotAttentionConfig slots;
  DecoderConfig decoder;
  ReasonerConfig reasoner;
  double lambda = 1000.0;
  // Ablation: skip slot attention and represent each panel by the mean value
  // embedding over locations (a single slot per panel).
  bool no_slot_attention = false;

  void validate() const {
    if (encoder.d_inputs != slots.d_inputs)
      throw contract_error("encoder d_inputs " + std::to_string(encoder.d_inputs) +
                           " != slot attention d_inputs " + std::to_string(slots.d_inputs));
    if (slots.d_slot != decoder.d_slot || slots.d_slot != reasoner.d_slot)
      throw contract_error("slot width disagreement: slots " + std::to_string(slots.d_slot) +
                           ", decoder " + std::to_string(decoder.d_slot) + ", reasoner " +
                           std::to_string(reasoner.d_slot));
    if (decoder.image_h != encoder.image_h || decoder.image_w != encoder.image_w ||
        decoder.img_channels != encoder.in_channels)
      throw contract_error("decoder output geometry must match encoder input geometry");
    if (decoder.hidden_channels.empty())
      throw contract_error("decoder needs at least one hidden conv");
    if (lambda < 0.0) throw contract_error("loss weight must be non-negative");
    if (reasoner.layers < 1 || reasoner.heads < 1 || reasoner.d_head < 1 || reasoner.d_mlp < 1)
      throw contract_error("reasoner dimensions must be positive");
    if (reasoner.dropout < 0.0 || reasoner.dropout >= 1.0)
      throw contract_error("dropout must lie in [0, 1)");
  }

  static ModelConfig full80() { return {}; }  // field defaults are this preset

  static ModelConfig full128() {
    ModelConfig c;
    c.encoder.image_h = c.encoder.image_w = 128;
    c.encoder.channels = {64, 64, 64, 64};
    c.encoder.in_channels = 3;
    c.encoder.d_inputs = 64;
    c.slots.d_inputs = 64;
    c.slots.d_slot = 64;
    c.decoder.d_slot = 64;
    c.decoder.image_h = c.decoder.image_w = 128;
    c.decoder.img_channels = 3;
    c.decoder.hidden_channels = {64, 64, 64, 64, 64};
    c.reasoner.d_slot = 64;
    c.reasoner.layers = 24;
    c.reasoner.dropout = 0.0;
    return c;
  }

  static ModelConfig desk() {
    ModelConfig c;
    c.encoder.image_h = c.encoder.image_w = 48;
    c.encoder.channels = {16, 16, 16, 16};
    c.encoder.strides = {2, 2, 1, 1};  // 48 -> 24 -> 12: N = 144 locations
    c.slots.k_slots = 9;
    c.decoder.image_h = c.decoder.image_w = 48;
    c.decoder.hidden_channels = {8, 8, 8};
    c.decoder.hidden_kernel = 1;  // fused pointwise stem
    c.reasoner.layers = 2;
    c.reasoner.heads = 4;
    c.reasoner.d_head = 16;
    c.reasoner.d_mlp = 256;
    c.reasoner.dropout = 0.0;
    return c;
  }

  static ModelConfig micro() {
    ModelConfig c;
    c.encoder.image_h = c.encoder.image_w = 8;
    c.encoder.channels = {4, 4, 4, 4};
    c.encoder.strides = {2, 1, 1, 1};  // 8 -> 4: N = 16 locations
    c.encoder.kernel = 3;
    c.encoder.pad = 1;
    c.encoder.d_inputs = 4;
    c.slots.k_slots = 2;
    c.slots.d_slot = 4;
    c.slots.d_inputs = 4;
    c.decoder.d_slot = 4;
    c.decoder.image_h = c.decoder.image_w = 8;
    c.decoder.hidden_channels = {4, 4, 4};
    c.decoder.hidden_kernel = 1;
    c.reasoner.d_slot = 4;
    c.reasoner.layers = 1;
    c.reasoner.heads = 1;
    c.reasoner.d_head = 4;
    c.reasoner.d_mlp = 8;
    c.reasoner.dropout = 0.0;
    return c;
  }
};

/// Handles into one problem's forward pass; all Vars live on the caller's tape.
template <typename Scalar>
struct ForwardResult {
  Var<Scalar> total;      // lambda * recon_loss + task_loss
  Var<Scalar> recon_loss;
  Var<Scalar> task_loss;
  Var<Scalar> scores;     // [8]
  Var<Scalar> recon;      // [16, C, H, W] composited reconstructions
  Var<Scalar> masks;      // [16, K, 1, H, W]
  Var<Scalar> attn;       // [16, K, N]
  Var<Scalar> slots;      // [16, K, D_slot]
  int64_t prediction = -1;
};

/// Reconstruction-only forward (no candidate scoring), for pretraining and
/// auxiliary reconstruction batches.
template <typename Scalar>
struct ReconResult {
  Var<Scalar> recon_loss;
  Var<Scalar> recon;
  Var<Scalar> masks;
  Var<Scalar> attn;
  Var<Scalar> slots;
};

/**
 * Parameter owner and forward-pass driver. Parameters are initialized from a
 * dedicated stream of `seed` and live in a ParamStore; each training/eval
 * tape binds them via BoundParams.
 */
template <typename Scalar>
class StsnModel {
 public:
  explicit StsnModel(ModelConfig cfg, uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Rng rng = Rng::derive(seed, {kStreamInit});
    register_encoder_params(params_, cfg_.encoder, rng);
    register_slot_attention_params(params_, cfg_.slots, rng);
    register_decoder_params(params_, cfg_.decoder, rng);
    register_reasoner_params(params_, cfg_.reasoner, rng);
    enc_pos_ = position_features<Scalar>(cfg_.encoder.out_h(), cfg_.encoder.out_w());
    dec_pos_ = position_features<Scalar>(cfg_.decoder.image_h, cfg_.decoder.image_w);
  }

  const ModelConfig& config() const { return cfg_; }
  ParamStore<Scalar>& params() { return params_; }
  const ParamStore<Scalar>& params() const { return params_; }

  /// Slots for a stack of panels [B, C, H, W] -> slots [B, K, D], attention
  /// [B, K, N]. slot_rng null selects the deterministic mean initialization.
  SlotsAndAttention<Scalar> encode(Tape<Scalar>& tape, const BoundParams<Scalar>& p,
                                   const Tensor<Scalar>& panels, Rng* slot_rng) const {
    Var<Scalar> imgs = tape.constant(panels);
    if (cfg_.no_slot_attention)
      return encode_to_mean_embedding(cfg_.encoder, cfg_.slots, p, imgs, enc_pos_);
    return encode_to_slots(cfg_.encoder, cfg_.slots, p, imgs, enc_pos_, slot_rng);
  }

  ReconResult<Scalar> reconstruct(Tape<Scalar>& tape, const BoundParams<Scalar>& p,
                                  const Tensor<Scalar>& panels, Rng* slot_rng) const {
    SlotsAndAttention<Scalar> enc = encode(tape, p, panels, slot_rng);
    Var<Scalar> renders = decode_slots(cfg_.decoder, p, enc.slots, dec_pos_);
    CompositeResult<Scalar> comp = composite(renders, cfg_.decoder.img_channels);
    Var<Scalar> loss = reconstruction_loss(tape.constant(panels), comp.image);
    return {loss, comp.image, comp.masks, enc.attn, enc.slots};
  }

  /**
   * One problem: images [16, C, H, W], context panels 0..7 then candidates
   * 0..7; answer in 0..7. dropout_rng null disables dropout (evaluation).
   */
  ForwardResult<Scalar> forward(Tape<Scalar>& tape, const BoundParams<Scalar>& p,
                                const Tensor<Scalar>& images, int64_t answer, Rng* slot_rng,
                                Rng* dropout_rng) const {
    if (images.rank() != 4 || images.dim(0) != 16)
      throw shape_error("problem images must be [16, C, H, W], got " + shape_str(images.shape()));
    ReconResult<Scalar> rec = reconstruct(tape, p, images, slot_rng);
    Var<Scalar> context = slice(rec.slots, 0, 0, 8);      // [8, K, D]
    Var<Scalar> candidates = slice(rec.slots, 0, 8, 8);   // [8, K, D]
    Var<Scalar> scores =
        score_candidates(cfg_.reasoner, p, context, candidates, dropout_rng);
    Var<Scalar> task = task_loss(scores, answer);
    Var<Scalar> total = total_loss(rec.recon_loss, task, cfg_.lambda);
    ForwardResult<Scalar> out{total,  rec.recon_loss, task,      scores,
                              rec.recon, rec.masks,   rec.attn,  rec.slots,
                              argmax_score(scores.val())};
    return out;
  }

 private:
  ModelConfig cfg_;
  ParamStore<Scalar> params_;
  Tensor<Scalar> enc_pos_;  // [N, 4] at the encoder's output resolution
  Tensor<Scalar> dec_pos_;  // [H*W, 4] at the image resolution
};

}  // namespace stsn
