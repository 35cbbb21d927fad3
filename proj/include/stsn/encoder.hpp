#pragma once

#include <array>
#include <cmath>
#include <string>

#include "stsn/conv.hpp"
#include "stsn/nn.hpp"
#include "stsn/ops.hpp"
#include "stsn/param.hpp"
#include "stsn/rng.hpp"

namespace stsn {

/**
 * Convolutional panel encoder: four conv+ReLU layers, an additive projected
 * positional embedding, per-location layer norm over channels, and a two-layer
 * per-location MLP (1x1 convolutions), producing N x d_inputs feature maps.
 */
struct EncoderConfig {
  int64_t in_channels = 1;
  int64_t image_h = 80;
  int64_t image_w = 80;
  std::array<int64_t, 4> channels{32, 32, 32, 32};
  std::array<int64_t, 4> strides{1, 1, 1, 1};
  int64_t kernel = 5;
  int64_t pad = 2;
  int64_t d_inputs = 32;

  int64_t out_h() const { return out_extent(image_h); }
  int64_t out_w() const { return out_extent(image_w); }
  int64_t n_locations() const { return out_h() * out_w(); }

 private:
  int64_t out_extent(int64_t e) const {
    for (int64_t s : strides) e = detail::conv_out_extent(e, kernel, s, pad);
    return e;
  }
};

/**
 * Positional embedding with four ramp channels: top→bottom, bottom→top,
 * left→right, right→left, each linear and normalized to [0,1].
 */
template <typename Scalar>
Tensor<Scalar> build_position_embedding(int64_t h, int64_t w) {
  if (h < 1 || w < 1) throw shape_error("position embedding needs positive extents");
  Tensor<Scalar> pos({4, h, w});
  for (int64_t i = 0; i < h; ++i) {
    Scalar down = h > 1 ? Scalar(i) / Scalar(h - 1) : Scalar(0);
    for (int64_t j = 0; j < w; ++j) {
      Scalar right = w > 1 ? Scalar(j) / Scalar(w - 1) : Scalar(0);
      pos(0, i, j) = down;
      pos(1, i, j) = Scalar(1) - down;
      pos(2, i, j) = right;
      pos(3, i, j) = Scalar(1) - right;
    }
  }
  return pos;
}

/// The same embedding flattened to [N, 4] for per-location projections.
template <typename Scalar>
Tensor<Scalar> position_features(int64_t h, int64_t w) {
  Tensor<Scalar> pos = build_position_embedding<Scalar>(h, w);
  Tensor<Scalar> flat({h * w, 4});
  for (int64_t c = 0; c < 4; ++c)
    for (int64_t i = 0; i < h * w; ++i) flat(i, c) = pos[c * h * w + i];
  return flat;
}

template <typename Scalar>
void register_encoder_params(ParamStore<Scalar>& store, const EncoderConfig& cfg, Rng& rng) {
  int64_t cin = cfg.in_channels;
  for (int64_t i = 0; i < 4; ++i) {
    int64_t cout = cfg.channels[static_cast<size_t>(i)];
    int64_t fan = cin * cfg.kernel * cfg.kernel;
    store.add("enc.conv" + std::to_string(i) + ".w",
              detail::uniform_fan_in<Scalar>({cout, cin, cfg.kernel, cfg.kernel}, fan, rng));
    store.add("enc.conv" + std::to_string(i) + ".b",
              detail::uniform_fan_in<Scalar>({cout}, fan, rng));
    cin = cout;
  }
  int64_t c = cfg.channels[3];
  store.add("enc.pos.w", detail::uniform_fan_in<Scalar>({c, 4}, 4, rng));
  store.add("enc.pos.b", detail::uniform_fan_in<Scalar>({c}, 4, rng));
  store.add("enc.ln.gain", Tensor<Scalar>::ones({c}));
  store.add("enc.ln.shift", Tensor<Scalar>::zeros({c}));
  store.add("enc.fc0.w", detail::uniform_fan_in<Scalar>({c, c}, c, rng));
  store.add("enc.fc0.b", detail::uniform_fan_in<Scalar>({c}, c, rng));
  store.add("enc.fc1.w", detail::uniform_fan_in<Scalar>({cfg.d_inputs, c}, c, rng));
  store.add("enc.fc1.b", detail::uniform_fan_in<Scalar>({cfg.d_inputs}, c, rng));
}

/**
 * imgs [B, C_in, H, W] -> features [B, N, d_inputs] with N = out_h * out_w.
 * `pos_feats` is position_features(out_h, out_w), passed in so callers can
 * cache it across panels.
 */
template <typename Scalar>
Var<Scalar> encode_panels(const EncoderConfig& cfg, const BoundParams<Scalar>& p,
                          Var<Scalar> imgs, const Tensor<Scalar>& pos_feats) {
  if (imgs.rank() != 4 || imgs.dim(1) != cfg.in_channels || imgs.dim(2) != cfg.image_h ||
      imgs.dim(3) != cfg.image_w)
    throw shape_error("encoder input " + shape_str(imgs.shape()) + ", configured for [B," +
                      std::to_string(cfg.in_channels) + "," + std::to_string(cfg.image_h) + "," +
                      std::to_string(cfg.image_w) + "]");
  int64_t n = cfg.n_locations();
  if (pos_feats.shape() != Shape{n, 4})
    throw shape_error("position features " + shape_str(pos_feats.shape()) + ", expected [" +
                      std::to_string(n) + ",4]");
  Tape<Scalar>& tape = *imgs.tape;
  Var<Scalar> h = imgs;
  for (int64_t i = 0; i < 4; ++i) {
    std::string base = "enc.conv" + std::to_string(i);
    h = relu(conv2d(h, p[base + ".w"], p[base + ".b"], cfg.strides[static_cast<size_t>(i)],
                    cfg.pad));
  }
  int64_t b = imgs.dim(0), c = cfg.channels[3];
  h = permute(reshape(h, {b, c, n}), {0, 2, 1});  // [B, N, C]
  Var<Scalar> pos = linear(tape.constant(pos_feats), p["enc.pos.w"], p["enc.pos.b"]);  // [N, C]
  h = add(h, pos);
  h = layer_norm(h, p["enc.ln.gain"], p["enc.ln.shift"]);
  h = relu(linear(h, p["enc.fc0.w"], p["enc.fc0.b"]));
  return linear(h, p["enc.fc1.w"], p["enc.fc1.b"]);
}

}  // namespace stsn
