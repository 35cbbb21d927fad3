#pragma once

#include <cstdint>
#include <vector>

#include "stsn/matrix.hpp"
#include "stsn/tensor.hpp"

namespace stsn {

/// Deterministic 2D render of a panel: a 3x3 cell lattice on a white
/// background; shape code 0/1/2 -> filled square/circle/triangle; size code
/// -> small/medium/large radius within the cell; color code c -> gray level
/// c/8 (white = 1 completes the evenly spaced ladder). Returns [1, h, w]
/// with pixels in [0, 1]. Requires h, w >= 48.
Tensor<float> rasterize(const SymbolicPanel& panel, int64_t h, int64_t w);

/// Pixel quantization used by the dataset format: byte = round(v * 255).
std::vector<uint8_t> quantize_image(const Tensor<float>& image);
Tensor<float> dequantize_image(const std::vector<uint8_t>& bytes, int64_t c, int64_t h,
                               int64_t w);

/// Rasterizes all 16 panels (context then candidates) into the problem's
/// byte buffers at the given resolution.
void rasterize_problem(MatrixProblem& problem, int64_t h, int64_t w);

/// The 16 panels of a problem as one [16, C, H, W] float tensor (byte/255).
Tensor<float> problem_images(const MatrixProblem& problem);

/// One transform tuple per problem - horizontal/vertical flips, a rotation
/// by a multiple of 90 degrees (180 only when h != w), and a brightness
/// factor in [0.5, 1.5] multiplying the deviation from white - applied
/// identically to all 16 panels. Input and output are [16, C, H, W].
struct AugmentParams {
  bool hflip = false;
  bool vflip = false;
  int64_t quarter_turns = 0;  // 0..3, counterclockwise
  double brightness = 1.0;
};

AugmentParams sample_augment_params(Rng& rng, bool allow_quarter_turns);
Tensor<float> apply_augment(const Tensor<float>& images, const AugmentParams& params);
Tensor<float> augment(const Tensor<float>& images, Rng& rng);

}  // namespace stsn
