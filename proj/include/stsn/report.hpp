#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stsn/matrix.hpp"
#include "stsn/trainer.hpp"

namespace stsn {

/**
 * Slot-segmentation measurements against ground-truth object masks.
 *
 * For every panel, each ground-truth region (one per object, plus the
 * background) is matched to the slot whose per-pixel argmax region overlaps
 * it best. `mean_best_iou` averages that best IoU over objects only (the
 * background is matched so its slot is not counted as unused, but it does
 * not enter the IoU average). Slots matched to no region are "unused"; their
 * mask mass is reported as a fraction of the panel's pixels.
 */
struct SegmentationStats {
  int64_t panels = 0;
  int64_t objects = 0;
  double mean_best_iou = 0.0;
  int64_t unused_slots = 0;
  double mean_unused_mass = 0.0;  // 0 when every slot is used
  double max_unused_mass = 0.0;
};

SegmentationStats segmentation_stats(Trainer& trainer,
                                     const std::vector<MatrixProblem>& problems,
                                     int64_t limit = 0);

/// Binary ground-truth masks, one [H, W] tensor of 0/1 per object, obtained
/// by rasterizing each object alone (any non-white pixel belongs to it).
std::vector<Tensor<float>> object_masks(const SymbolicPanel& panel, int64_t h, int64_t w);

/// 8-bit binary PGM (P5) writer for a [H, W] grayscale tensor in [0, 1].
void write_pgm(const std::string& path, const Tensor<float>& gray);

/// Per-slot reconstruction grid for one problem: 16 rows (context panels
/// then candidates), K+2 columns (original, composite, then one column per
/// slot rendered against a white background).
void write_slot_grid(const std::string& path, Trainer& trainer, const MatrixProblem& problem);

/// Full report directory: loss curves as CSV, per-slot grids for the first
/// `grid_count` sample problems, and a plain-text summary with per-type
/// accuracy and segmentation statistics.
void emit_report(const std::string& dir, Trainer& trainer, const TrainResult& log,
                 const std::vector<MatrixProblem>& samples, int64_t grid_count = 4);

}  // namespace stsn
