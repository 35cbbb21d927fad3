#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stsn/adam.hpp"
#include "stsn/checkpoint.hpp"
#include "stsn/config.hpp"
#include "stsn/matrix.hpp"
#include "stsn/model.hpp"

namespace stsn {

/// One optimizer step's logged loss decomposition; `total` always equals
/// lambda * recon + task for the objective actually stepped (in dual
/// training `recon` is the half-and-half mix of both sets' terms).
struct StepMetrics {
  int64_t step = 0;
  int64_t epoch = 0;
  double lr = 0.0;
  double total = 0.0;
  double recon = 0.0;
  double task = 0.0;
};

struct EpochMetrics {
  int64_t epoch = 0;
  double mean_total = 0.0;
  double train_acc = -1.0;  // -1 when not measured this epoch
  double val_acc = -1.0;
};

struct EvalResult {
  int64_t total = 0;
  int64_t correct = 0;
  std::array<int64_t, 3> type_total{};    // indexed by ProblemType
  std::array<int64_t, 3> type_correct{};
  double mean_recon = 0.0;  // mean per-problem reconstruction loss

  double accuracy() const { return total > 0 ? double(correct) / double(total) : 0.0; }
  double type_accuracy(ProblemType t) const {
    int64_t n = type_total[size_t(t)];
    return n > 0 ? double(type_correct[size_t(t)]) / double(n) : 0.0;
  }
};

struct TrainResult {
  std::vector<StepMetrics> steps;
  std::vector<EpochMetrics> epochs;
  int64_t global_steps = 0;
  bool reached_target = false;
  double best_val_acc = -1.0;
  double final_train_acc = -1.0;
  double final_val_acc = -1.0;
};

/**
 * Single-worker training driver. All stochastic choices (shuffles,
 * augmentations, slot noise, dropout) come from streams derived from the
 * config seed plus epoch/problem indices, so a fixed seed reproduces the
 * whole trajectory bitwise.
 */
class Trainer {
 public:
  /// Architecture resolved from the config's preset + overrides.
  explicit Trainer(const TrainConfig& cfg);
  /// Explicit architecture (identically shaped to resolve_model_config
  /// output in production; tests use slimmer stacks).
  Trainer(const TrainConfig& cfg, const ModelConfig& model_cfg);

  const TrainConfig& config() const { return cfg_; }
  const ModelConfig& model_config() const { return model_cfg_; }
  uint64_t arch_hash() const { return hash_; }
  StsnModel<float>& model() { return model_; }
  Adam<float>& optimizer() { return opt_; }
  int64_t global_step() const { return global_step_; }

  /// Standard or dual training: when `extra_recon` is non-null and nonempty,
  /// every step mixes one task batch with one same-sized reconstruction-only
  /// batch at equal weight (objective lambda*(R_task+R_extra)/2 + task);
  /// otherwise the objective is lambda*R_task + task.
  TrainResult fit(const std::vector<MatrixProblem>& train_set,
                  const std::vector<MatrixProblem>* val_set = nullptr,
                  const std::vector<MatrixProblem>* extra_recon = nullptr);

  /// Reconstruction-only pretraining of encoder + slot attention + decoder;
  /// reasoner parameters are not part of the objective and keep their
  /// initialization.
  TrainResult pretrain(const std::vector<MatrixProblem>& image_set);

  /// Deterministic evaluation: mean slot initialization, dropout off.
  /// limit > 0 evaluates only the first `limit` problems.
  EvalResult evaluate(const std::vector<MatrixProblem>& set, int64_t limit = 0);

  /// Checkpointing. Full checkpoints carry all parameters plus optimizer
  /// moments and step counters; `encoder_stack_only` restricts to the
  /// enc./sa./dec. parameter groups (pretraining artifact).
  void save(const std::string& path, bool encoder_stack_only = false) const;
  /// Loads parameters (and optimizer state when present). allow_partial
  /// accepts checkpoints covering only a subset of parameter names, e.g.
  /// fine-tuning from a pretrained encoder stack with a fresh reasoner.
  void load(const std::string& path, bool allow_partial = false);

  /// True once fit() has tracked a best-validation parameter snapshot.
  bool has_best() const { return has_best_; }
  /// Restore the best-validation snapshot into the live parameters.
  void restore_best();

 private:
  TrainResult run(const std::vector<MatrixProblem>& train_set,
                  const std::vector<MatrixProblem>* val_set,
                  const std::vector<MatrixProblem>* extra_recon, bool recon_only);
  void snapshot_best(double val_acc);

  TrainConfig cfg_;
  ModelConfig model_cfg_;
  uint64_t hash_ = 0;
  StsnModel<float> model_;
  Adam<float> opt_;
  int64_t global_step_ = 0;
  bool has_best_ = false;
  double best_val_acc_ = -1.0;
  std::vector<Tensor<float>> best_params_;
};

}  // namespace stsn
