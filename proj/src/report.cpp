#include "stsn/report.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "stsn/raster.hpp"
#include "stsn/slot_decoder.hpp"

namespace stsn {

namespace {

// Any non-white pixel of a single-object rasterization belongs to the
// object; the palette tops out at 7/8, so strict < 1 is unambiguous.
constexpr float kInkThreshold = 0.999f;

struct PanelDecode {
  Tensor<float> original;   // [C, H, W]
  Tensor<float> composite;  // [C, H, W]
  Tensor<float> masks;      // [K, H, W] (softmax over K per pixel)
  Tensor<float> slot_rgb;   // [K, C, H, W]
};

std::vector<PanelDecode> decode_problem(Trainer& trainer, const MatrixProblem& problem) {
  StsnModel<float>& model = trainer.model();
  const DecoderConfig& dc = model.config().decoder;
  Tensor<float> images = problem_images(problem);
  const int64_t B = images.dim(0), C = images.dim(1), H = images.dim(2), W = images.dim(3);

  Tape<float> tape;
  BoundParams<float> p(model.params(), tape, /*trainable=*/false);
  // Same fixed evaluation stream as Trainer::evaluate (see kEvalSeed): the
  // decomposition shown in reports is the one the metrics were scored with.
  Rng sr = Rng::derive(kEvalSeed, {kStreamSlots, 0});
  SlotsAndAttention<float> enc = model.encode(tape, p, images, &sr);
  Tensor<float> pos = position_features<float>(dc.image_h, dc.image_w);
  Var<float> renders = decode_slots(dc, p, enc.slots, pos);  // [B, K, C+1, H, W]
  CompositeResult<float> comp = composite(renders, dc.img_channels);
  const Tensor<float>& rend = renders.val();
  const Tensor<float>& img = comp.image.val();
  const Tensor<float>& msk = comp.masks.val();  // [B, K, 1, H, W]
  const int64_t K = msk.dim(1);

  std::vector<PanelDecode> out(static_cast<size_t>(B));
  for (int64_t b = 0; b < B; ++b) {
    PanelDecode& d = out[size_t(b)];
    d.original = Tensor<float>({C, H, W});
    d.composite = Tensor<float>({C, H, W});
    d.masks = Tensor<float>({K, H, W});
    d.slot_rgb = Tensor<float>({K, C, H, W});
    const int64_t hw = H * W;
    std::copy_n(images.data() + b * C * hw, C * hw, d.original.data());
    std::copy_n(img.data() + b * C * hw, C * hw, d.composite.data());
    for (int64_t k = 0; k < K; ++k) {
      std::copy_n(msk.data() + (b * K + k) * hw, hw, d.masks.data() + k * hw);
      std::copy_n(rend.data() + ((b * K + k) * (C + 1)) * hw, C * hw,
                  d.slot_rgb.data() + k * C * hw);
    }
  }
  return out;
}

Tensor<float> to_gray(const float* chw, int64_t c, int64_t h, int64_t w) {
  Tensor<float> g({h, w});
  for (int64_t i = 0; i < h * w; ++i) {
    float acc = 0.0f;
    for (int64_t ch = 0; ch < c; ++ch) acc += chw[ch * h * w + i];
    g.data()[i] = acc / float(c);
  }
  return g;
}

}  // namespace

std::vector<Tensor<float>> object_masks(const SymbolicPanel& panel, int64_t h, int64_t w) {
  std::vector<Tensor<float>> masks;
  masks.reserve(panel.objects.size());
  for (const ObjectSpec& obj : panel.objects) {
    SymbolicPanel solo;
    solo.objects = {obj};
    Tensor<float> img = rasterize(solo, h, w);  // [1, h, w]
    Tensor<float> mask({h, w});
    for (int64_t i = 0; i < h * w; ++i)
      mask.data()[i] = img.data()[i] < kInkThreshold ? 1.0f : 0.0f;
    masks.push_back(std::move(mask));
  }
  return masks;
}

SegmentationStats segmentation_stats(Trainer& trainer,
                                     const std::vector<MatrixProblem>& problems,
                                     int64_t limit) {
  SegmentationStats stats;
  double iou_sum = 0.0, unused_mass_sum = 0.0;
  const size_t n = limit > 0 ? std::min(problems.size(), size_t(limit)) : problems.size();
  for (size_t pi = 0; pi < n; ++pi) {
    const MatrixProblem& prob = problems[pi];
    std::vector<PanelDecode> panels = decode_problem(trainer, prob);
    const int64_t H = prob.image_h, W = prob.image_w;
    for (size_t b = 0; b < panels.size(); ++b) {
      const SymbolicPanel& sym = b < 8 ? prob.context[b] : prob.candidates[b - 8];
      const PanelDecode& d = panels[b];
      const int64_t K = d.masks.dim(0), hw = H * W;

      // Per-pixel argmax regions.
      std::vector<int> owner(static_cast<size_t>(hw));
      for (int64_t i = 0; i < hw; ++i) {
        int best = 0;
        float bv = d.masks.data()[i];
        for (int64_t k = 1; k < K; ++k) {
          float v = d.masks.data()[k * hw + i];
          if (v > bv) { bv = v; best = int(k); }
        }
        owner[size_t(i)] = best;
      }

      // Ground-truth regions: one per object, plus the background.
      std::vector<Tensor<float>> gts = object_masks(sym, H, W);
      Tensor<float> background({H, W}, 1.0f);
      for (const auto& m : gts)
        for (int64_t i = 0; i < hw; ++i)
          if (m.data()[i] > 0.0f) background.data()[i] = 0.0f;

      std::vector<char> used(size_t(K), 0);
      auto best_match = [&](const Tensor<float>& gt) {
        std::vector<int64_t> inter(size_t(K), 0);
        int64_t gt_area = 0;
        for (int64_t i = 0; i < hw; ++i) {
          if (gt.data()[i] > 0.0f) {
            ++gt_area;
            ++inter[size_t(owner[size_t(i)])];
          }
        }
        std::vector<int64_t> region(size_t(K), 0);
        for (int64_t i = 0; i < hw; ++i) ++region[size_t(owner[size_t(i)])];
        double best_iou = 0.0;
        int64_t best_k = 0;
        for (int64_t k = 0; k < K; ++k) {
          int64_t uni = gt_area + region[size_t(k)] - inter[size_t(k)];
          double iou = uni > 0 ? double(inter[size_t(k)]) / double(uni) : 0.0;
          if (iou > best_iou) { best_iou = iou; best_k = k; }
        }
        return std::pair<double, int64_t>(best_iou, best_k);
      };

      for (const auto& gt : gts) {
        auto [iou, k] = best_match(gt);
        iou_sum += iou;
        ++stats.objects;
        if (iou > 0.0) used[size_t(k)] = 1;
      }
      auto [bg_iou, bg_k] = best_match(background);
      if (bg_iou > 0.0) used[size_t(bg_k)] = 1;

      for (int64_t k = 0; k < K; ++k) {
        if (used[size_t(k)]) continue;
        double mass = 0.0;
        for (int64_t i = 0; i < hw; ++i) mass += double(d.masks.data()[k * hw + i]);
        mass /= double(hw);
        ++stats.unused_slots;
        unused_mass_sum += mass;
        stats.max_unused_mass = std::max(stats.max_unused_mass, mass);
      }
      ++stats.panels;
    }
  }
  if (stats.objects > 0) stats.mean_best_iou = iou_sum / double(stats.objects);
  if (stats.unused_slots > 0) stats.mean_unused_mass = unused_mass_sum / double(stats.unused_slots);
  return stats;
}

void write_pgm(const std::string& path, const Tensor<float>& gray) {
  if (gray.rank() != 2) throw shape_error("write_pgm expects [H, W]");
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw format_error("cannot open image for writing: " + path);
  f << "P5\n" << gray.dim(1) << " " << gray.dim(0) << "\n255\n";
  for (int64_t i = 0; i < gray.numel(); ++i) {
    float v = std::clamp(gray.data()[i], 0.0f, 1.0f);
    f.put(char(uint8_t(std::lround(v * 255.0f))));
  }
  if (!f) throw format_error("write failed for image: " + path);
}

void write_slot_grid(const std::string& path, Trainer& trainer, const MatrixProblem& problem) {
  std::vector<PanelDecode> panels = decode_problem(trainer, problem);
  const int64_t H = problem.image_h, W = problem.image_w;
  const int64_t C = int64_t(problem.channels);
  const int64_t K = panels.front().masks.dim(0);
  const int64_t rows = int64_t(panels.size()), cols = K + 2, sep = 2;
  Tensor<float> grid({rows * H + (rows - 1) * sep, cols * W + (cols - 1) * sep}, 1.0f);
  const int64_t gw = grid.dim(1);

  auto blit = [&](int64_t row, int64_t col, const Tensor<float>& cell) {
    int64_t oy = row * (H + sep), ox = col * (W + sep);
    for (int64_t y = 0; y < H; ++y)
      for (int64_t x = 0; x < W; ++x)
        grid.data()[(oy + y) * gw + ox + x] = cell.data()[y * W + x];
  };

  for (int64_t r = 0; r < rows; ++r) {
    const PanelDecode& d = panels[size_t(r)];
    blit(r, 0, to_gray(d.original.data(), C, H, W));
    blit(r, 1, to_gray(d.composite.data(), C, H, W));
    for (int64_t k = 0; k < K; ++k) {
      // Slot render against white: m_k * x_k + (1 - m_k) * 1. Slots with no
      // mask mass show as blank panels.
      Tensor<float> cell({H, W});
      Tensor<float> slot_gray = to_gray(d.slot_rgb.data() + k * C * H * W, C, H, W);
      for (int64_t i = 0; i < H * W; ++i) {
        float m = d.masks.data()[k * H * W + i];
        cell.data()[i] = m * slot_gray.data()[i] + (1.0f - m);
      }
      blit(r, 2 + k, cell);
    }
  }
  write_pgm(path, grid);
}

void emit_report(const std::string& dir, Trainer& trainer, const TrainResult& log,
                 const std::vector<MatrixProblem>& samples, int64_t grid_count) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw format_error("cannot create report directory " + dir + ": " + ec.message());

  {
    std::ofstream f(dir + "/steps.csv", std::ios::trunc);
    if (!f) throw format_error("cannot write " + dir + "/steps.csv");
    f << "step,epoch,lr,loss,recon,task\n";
    f.precision(10);
    for (const StepMetrics& m : log.steps)
      f << m.step << "," << m.epoch << "," << m.lr << "," << m.total << "," << m.recon << ","
        << m.task << "\n";
  }
  {
    std::ofstream f(dir + "/epochs.csv", std::ios::trunc);
    if (!f) throw format_error("cannot write " + dir + "/epochs.csv");
    f << "epoch,mean_loss,train_acc,val_acc\n";
    f.precision(10);
    for (const EpochMetrics& m : log.epochs)
      f << m.epoch << "," << m.mean_total << "," << m.train_acc << "," << m.val_acc << "\n";
  }

  EvalResult eval = trainer.evaluate(samples);
  SegmentationStats seg = segmentation_stats(trainer, samples, grid_count * 4);
  {
    std::ofstream f(dir + "/summary.txt", std::ios::trunc);
    if (!f) throw format_error("cannot write " + dir + "/summary.txt");
    f << "architecture: " << architecture_signature(trainer.model_config()) << "\n"
      << "architecture hash: " << trainer.arch_hash() << "\n"
      << "parameters: " << trainer.model().params().scalar_count() << "\n"
      << "optimizer steps: " << trainer.global_step() << "\n\n"
      << "configuration:\n" << describe(trainer.config()) << "\n"
      << "sample evaluation (" << eval.total << " problems):\n"
      << "  overall accuracy: " << eval.accuracy() << "\n";
    const char* type_names[3] = {"logic", "location", "count"};
    for (int t = 0; t < 3; ++t)
      if (eval.type_total[size_t(t)] > 0)
        f << "  " << type_names[t] << " accuracy: " << eval.type_accuracy(ProblemType(t))
          << " (" << eval.type_correct[size_t(t)] << "/" << eval.type_total[size_t(t)] << ")\n";
    f << "  mean reconstruction loss: " << eval.mean_recon << "\n\n"
      << "segmentation (" << seg.panels << " panels, " << seg.objects << " objects):\n"
      << "  mean best-match IoU: " << seg.mean_best_iou << "\n"
      << "  unused slots: " << seg.unused_slots << "\n"
      << "  mean unused mask mass: " << seg.mean_unused_mass << "\n"
      << "  max unused mask mass: " << seg.max_unused_mass << "\n";
    if (!f) throw format_error("write failed for " + dir + "/summary.txt");
  }

  const int64_t grids = std::min<int64_t>(grid_count, int64_t(samples.size()));
  for (int64_t i = 0; i < grids; ++i)
    write_slot_grid(dir + "/slots_" + std::to_string(i) + ".pgm", trainer,
                    samples[size_t(i)]);
}

}  // namespace stsn
