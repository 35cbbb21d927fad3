#pragma once

#include <string>
#include <utility>
#include <vector>

#include "stsn/conv.hpp"
#include "stsn/encoder.hpp"
#include "stsn/nn.hpp"
#include "stsn/ops.hpp"
#include "stsn/param.hpp"

namespace stsn {

/**
 * Spatial broadcast decoder: each slot is tiled over the output grid, a
 * projected positional embedding is added, and a small conv stack produces
 * the slot's reconstruction plus one mask-logit channel. A per-pixel softmax
 * over slots composites the K renders into the final reconstruction.
 */
struct DecoderConfig {
  int64_t d_slot = 32;
  int64_t image_h = 80;
  int64_t image_w = 80;
  int64_t img_channels = 1;
  std::vector<int64_t> hidden_channels{32, 32, 32};
  int64_t hidden_kernel = 5;  // 1 selects the fused pointwise stem
  int64_t out_kernel = 3;

  int64_t out_channels() const { return img_channels + 1; }
  int64_t n_pixels() const { return image_h * image_w; }
};

template <typename Scalar>
struct CompositeResult {
  Var<Scalar> image;  // [B, C, H, W]
  Var<Scalar> masks;  // [B, K, 1, H, W], per-pixel sum over K equals 1
};

template <typename Scalar>
void register_decoder_params(ParamStore<Scalar>& store, const DecoderConfig& cfg, Rng& rng) {
  store.add("dec.pos.w", detail::uniform_fan_in<Scalar>({cfg.d_slot, 4}, 4, rng));
  store.add("dec.pos.b", detail::uniform_fan_in<Scalar>({cfg.d_slot}, 4, rng));
  int64_t cin = cfg.d_slot;
  for (size_t i = 0; i < cfg.hidden_channels.size(); ++i) {
    int64_t cout = cfg.hidden_channels[i];
    int64_t k = cfg.hidden_kernel;
    int64_t fan = cin * k * k;
    store.add("dec.conv" + std::to_string(i) + ".w",
              detail::uniform_fan_in<Scalar>({cout, cin, k, k}, fan, rng));
    store.add("dec.conv" + std::to_string(i) + ".b",
              detail::uniform_fan_in<Scalar>({cout}, fan, rng));
    cin = cout;
  }
  int64_t fan = cin * cfg.out_kernel * cfg.out_kernel;
  store.add("dec.out.w", detail::uniform_fan_in<Scalar>(
                             {cfg.out_channels(), cin, cfg.out_kernel, cfg.out_kernel}, fan, rng));
  store.add("dec.out.b", detail::uniform_fan_in<Scalar>({cfg.out_channels()}, fan, rng));
}

/// Tile each latent vector over an H x W grid: [B, D] -> [B, D, H, W].
template <typename Scalar>
Var<Scalar> spatial_broadcast(Var<Scalar> slots, int64_t h, int64_t w) {
  if (slots.rank() != 2) throw shape_error("spatial_broadcast expects [B, D]");
  if (h < 1 || w < 1) throw shape_error("spatial_broadcast needs positive extents");
  int64_t b = slots.dim(0), d = slots.dim(1);
  return reshape(broadcast_to(reshape(slots, {b, d, 1}), {b, d, h * w}), {b, d, h, w});
}

/**
 * Decode every slot to its render: slots [B, K, D] -> [B, K, C+1, H, W]
 * (C image channels, then the mask logit).
 *
 * When hidden_kernel == 1 the first convolution is pointwise, so
 * conv0(broadcast(slot) + pos) splits into a per-slot linear term plus a
 * shared spatial map; the fused stem computes both without materializing the
 * broadcast tensor. The explicit path is used for larger kernels and is
 * numerically identical for k = 1.
 */
template <typename Scalar>
Var<Scalar> decode_slots(const DecoderConfig& cfg, const BoundParams<Scalar>& p,
                         Var<Scalar> slots, const Tensor<Scalar>& pos_feats) {
  if (slots.rank() != 3 || slots.dim(2) != cfg.d_slot)
    throw shape_error("decode_slots input " + shape_str(slots.shape()) + ", d_slot " +
                      std::to_string(cfg.d_slot));
  int64_t b = slots.dim(0), k = slots.dim(1);
  int64_t n = cfg.n_pixels(), hgt = cfg.image_h, wid = cfg.image_w;
  if (pos_feats.shape() != Shape{n, 4})
    throw shape_error("decoder position features " + shape_str(pos_feats.shape()));
  Tape<Scalar>& tape = *slots.tape;
  Var<Scalar> flat = reshape(slots, {b * k, cfg.d_slot});
  Var<Scalar> pos_d = linear(tape.constant(pos_feats), p["dec.pos.w"], p["dec.pos.b"]);  // [N, D]

  Var<Scalar> h;
  if (cfg.hidden_kernel == 1) {
    // conv0(x + pos) = conv0(x) + conv0(pos): per-slot vector + shared map
    int64_t c0 = cfg.hidden_channels[0];
    Var<Scalar> w0 = reshape(p["dec.conv0.w"], {c0, cfg.d_slot});
    Var<Scalar> a = linear(flat, w0, p["dec.conv0.b"]);                    // [BK, c0]
    Var<Scalar> pp = permute(matmul(pos_d, w0, false, true), {1, 0});     // [c0, N]
    Var<Scalar> x = add(broadcast_to(reshape(a, {b * k, c0, 1}), {b * k, c0, n}), pp);
    h = reshape(relu(x), {b * k, c0, hgt, wid});
  } else {
    Var<Scalar> x = spatial_broadcast(flat, hgt, wid);  // [BK, D, H, W]
    Var<Scalar> pos_chw = reshape(permute(pos_d, {1, 0}), {cfg.d_slot, hgt, wid});
    x = add(x, pos_chw);
    h = relu(conv2d(x, p["dec.conv0.w"], p["dec.conv0.b"], 1, cfg.hidden_kernel / 2));
  }
  for (size_t i = 1; i < cfg.hidden_channels.size(); ++i) {
    std::string base = "dec.conv" + std::to_string(i);
    h = relu(conv2d(h, p[base + ".w"], p[base + ".b"], 1, cfg.hidden_kernel / 2));
  }
  h = conv2d(h, p["dec.out.w"], p["dec.out.b"], 1, cfg.out_kernel / 2);
  return reshape(h, {b, k, cfg.out_channels(), hgt, wid});
}

/**
 * Composite K renders into one image: per-pixel softmax over the K mask
 * logits, then the mask-weighted sum of the K reconstructions.
 */
template <typename Scalar>
CompositeResult<Scalar> composite(Var<Scalar> renders, int64_t img_channels) {
  if (renders.rank() != 5 || renders.dim(2) != img_channels + 1)
    throw shape_error("composite input " + shape_str(renders.shape()) + " for " +
                      std::to_string(img_channels) + " image channels");
  Var<Scalar> recon = slice(renders, 2, 0, img_channels);        // [B, K, C, H, W]
  Var<Scalar> logits = slice(renders, 2, img_channels, 1);       // [B, K, 1, H, W]
  Var<Scalar> masks = softmax(logits, 1);
  Var<Scalar> image = sum(mul(masks, recon), 1);                 // [B, C, H, W]
  return {image, masks};
}

/// Mean squared error between panels and their reconstructions, over
/// everything: panels, channels, pixels.
template <typename Scalar>
Var<Scalar> reconstruction_loss(Var<Scalar> panels, Var<Scalar> recons) {
  return mse(recons, panels);
}

}  // namespace stsn
