#include "stsn/raster.hpp"

#include <algorithm>
#include <cmath>

namespace stsn {

namespace {

constexpr double kSizeRadius[3] = {0.45, 0.65, 0.88};  // fraction of the half-cell

bool inside_triangle(double dx, double dy, double r) {
  // upward-pointing triangle inscribed in the radius-r circle:
  // apex (0,-r), base corners (+-r*sqrt(3)/2, r/2)
  double ax = 0.0, ay = -r;
  double bx = -0.8660254037844386 * r, by = 0.5 * r;
  double cx = 0.8660254037844386 * r, cy = 0.5 * r;
  auto side = [&](double x0, double y0, double x1, double y1) {
    return (x1 - x0) * (dy - y0) - (y1 - y0) * (dx - x0);
  };
  double s0 = side(ax, ay, bx, by), s1 = side(bx, by, cx, cy), s2 = side(cx, cy, ax, ay);
  return (s0 >= 0 && s1 >= 0 && s2 >= 0) || (s0 <= 0 && s1 <= 0 && s2 <= 0);
}

}  // namespace

Tensor<float> rasterize(const SymbolicPanel& panel, int64_t h, int64_t w) {
  if (h < 48 || w < 48) throw contract_error("rasterize needs h, w >= 48");
  for (const ObjectSpec& o : panel.objects)
    if (o.location < 0 || o.location >= kCells || o.shape < 0 || o.shape >= kShapes ||
        o.size < 0 || o.size >= kSizes || o.color < 0 || o.color >= kColors)
      throw contract_error("rasterize: object attribute out of range");

  Tensor<float> img = Tensor<float>::full({1, h, w}, 1.0f);
  double cell_h = double(h) / 3.0, cell_w = double(w) / 3.0;
  for (const ObjectSpec& o : panel.objects) {
    double cy = (double(o.location / 3) + 0.5) * cell_h;
    double cx = (double(o.location % 3) + 0.5) * cell_w;
    double r = kSizeRadius[o.size] * std::min(cell_h, cell_w) / 2.0;
    float v = float(o.color) / float(kColors);

    int64_t y0 = std::max<int64_t>(0, int64_t(std::floor(cy - r)));
    int64_t y1 = std::min<int64_t>(h - 1, int64_t(std::ceil(cy + r)));
    int64_t x0 = std::max<int64_t>(0, int64_t(std::floor(cx - r)));
    int64_t x1 = std::min<int64_t>(w - 1, int64_t(std::ceil(cx + r)));
    for (int64_t y = y0; y <= y1; ++y)
      for (int64_t x = x0; x <= x1; ++x) {
        double dx = double(x) + 0.5 - cx, dy = double(y) + 0.5 - cy;
        bool hit = o.shape == 0   ? std::max(std::abs(dx), std::abs(dy)) <= r
                   : o.shape == 1 ? dx * dx + dy * dy <= r * r
                                  : inside_triangle(dx, dy, r);
        if (hit) img(0, y, x) = v;
      }
  }
  return img;
}

std::vector<uint8_t> quantize_image(const Tensor<float>& image) {
  std::vector<uint8_t> out(size_t(image.numel()));
  for (int64_t i = 0; i < image.numel(); ++i) {
    float v = std::clamp(image[i], 0.0f, 1.0f);
    out[size_t(i)] = uint8_t(std::lround(double(v) * 255.0));
  }
  return out;
}

Tensor<float> dequantize_image(const std::vector<uint8_t>& bytes, int64_t c, int64_t h,
                               int64_t w) {
  if (int64_t(bytes.size()) != c * h * w)
    throw shape_error("image byte buffer does not match its dimensions");
  Tensor<float> out({c, h, w});
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = float(bytes[size_t(i)]) / 255.0f;
  return out;
}

void rasterize_problem(MatrixProblem& problem, int64_t h, int64_t w) {
  problem.image_h = h;
  problem.image_w = w;
  problem.channels = 1;
  problem.images.clear();
  problem.images.reserve(16);
  for (int64_t i = 0; i < 8; ++i)
    problem.images.push_back(quantize_image(rasterize(problem.context[size_t(i)], h, w)));
  for (int64_t i = 0; i < 8; ++i)
    problem.images.push_back(quantize_image(rasterize(problem.candidates[size_t(i)], h, w)));
}

Tensor<float> problem_images(const MatrixProblem& problem) {
  if (problem.images.size() != 16) throw contract_error("problem has no rasterized images");
  int64_t c = problem.channels, h = problem.image_h, w = problem.image_w;
  Tensor<float> out({16, c, h, w});
  for (int64_t p = 0; p < 16; ++p) {
    const std::vector<uint8_t>& bytes = problem.images[size_t(p)];
    if (int64_t(bytes.size()) != c * h * w)
      throw shape_error("panel byte buffer does not match the problem dimensions");
    for (int64_t i = 0; i < c * h * w; ++i)
      out[p * c * h * w + i] = float(bytes[size_t(i)]) / 255.0f;
  }
  return out;
}

AugmentParams sample_augment_params(Rng& rng, bool allow_quarter_turns) {
  AugmentParams p;
  p.hflip = rng.bernoulli(0.5);
  p.vflip = rng.bernoulli(0.5);
  p.quarter_turns = allow_quarter_turns ? rng.uniform_int(4) : 2 * rng.uniform_int(2);
  p.brightness = rng.uniform(0.5, 1.5);
  return p;
}

Tensor<float> apply_augment(const Tensor<float>& images, const AugmentParams& params) {
  if (images.rank() != 4 || images.dim(0) != 16)
    throw shape_error("augment expects [16, C, H, W]");
  if (params.quarter_turns < 0 || params.quarter_turns > 3)
    throw contract_error("quarter_turns must be 0..3");
  int64_t c = images.dim(1), h = images.dim(2), w = images.dim(3);
  if (params.quarter_turns % 2 == 1 && h != w)
    throw contract_error("90-degree rotations need square panels");

  int64_t oh = params.quarter_turns % 2 == 0 ? h : w;
  int64_t ow = params.quarter_turns % 2 == 0 ? w : h;
  Tensor<float> out({16, c, oh, ow});
  for (int64_t p = 0; p < 16; ++p)
    for (int64_t ch = 0; ch < c; ++ch)
      for (int64_t y = 0; y < oh; ++y)
        for (int64_t x = 0; x < ow; ++x) {
          // invert the output coordinate through rotation, then the flips
          int64_t sy = y, sx = x;
          switch (params.quarter_turns) {
            case 1: sy = x; sx = oh - 1 - y; break;           // 90 deg ccw
            case 2: sy = h - 1 - y; sx = w - 1 - x; break;    // 180 deg
            case 3: sy = ow - 1 - x; sx = y; break;           // 270 deg ccw
            default: break;
          }
          if (params.hflip) sx = w - 1 - sx;
          if (params.vflip) sy = h - 1 - sy;
          double v = double(images(p, ch, sy, sx));
          double dev = std::clamp(params.brightness * (1.0 - v), 0.0, 1.0);
          out(p, ch, y, x) = float(1.0 - dev);
        }
  return out;
}

Tensor<float> augment(const Tensor<float>& images, Rng& rng) {
  if (images.rank() != 4 || images.dim(0) != 16)
    throw shape_error("augment expects [16, C, H, W]");
  return apply_augment(images,
                       sample_augment_params(rng, images.dim(2) == images.dim(3)));
}

}  // namespace stsn
