#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stsn/model.hpp"

namespace stsn {

/// Named architecture presets; `resolve_model_config` starts from the preset
/// and applies any explicit TrainConfig overrides on top.
enum class Preset { full80, full128, desk, micro };

/// Training regimes: plain task training, reconstruction-only pretraining of
/// the encoder/slot-attention/decoder stack, and dual training that mixes an
/// extra reconstruction-only set into every step.
enum class Regime { standard, recon_pretrain, dual_train };

std::string to_string(Preset p);
std::string to_string(Regime r);
Preset preset_from_string(const std::string& s);
Regime regime_from_string(const std::string& s);

/**
 * Full run configuration. Architecture fields default to 0 (dropout: -1),
 * which means "inherit from the preset"; optimization fields carry the
 * reference defaults (batch 16, lr 4e-4, 75k warmup steps, 500 epochs,
 * lambda 1000, 6 transformer layers with dropout 0.1 via the full80 preset).
 *
 * Files may set every field, as `key = value` lines (# comments allowed) or
 * as a flat JSON object with the same keys. Later sources win: file, then
 * command-line overrides, then the STSN_SEED environment variable.
 */
struct TrainConfig {
  Preset preset = Preset::full80;

  // Architecture overrides (0 / negative dropout = keep the preset value).
  int64_t image_size = 0;
  int64_t k_slots = 0;
  int64_t d_slot = 0;
  int64_t t_iters = 0;
  int64_t layers = 0;
  int64_t heads = 0;
  int64_t d_head = 0;
  int64_t d_mlp = 0;
  double dropout = -1.0;

  // Optimization.
  int64_t batch_size = 16;
  double lr = 4e-4;
  int64_t warmup_steps = 75000;
  int64_t epochs = 500;
  double lambda = 1000.0;
  uint64_t seed = 0;

  // Ablation switches; at most one may be active for an `ablate` run.
  bool no_slot_attention = false;
  bool no_tcn = false;
  bool small_transformer_L4 = false;
  bool no_augmentations = false;
  bool no_dropout = false;

  Regime regime = Regime::standard;

  // Harness cadence. eval_every = 0 disables accuracy passes between epochs;
  // *_eval_limit = 0 evaluates the whole set. target_train_acc > 0 stops
  // training once the measured train accuracy reaches the target.
  int64_t eval_every = 1;
  int64_t train_eval_limit = 0;
  int64_t val_eval_limit = 0;
  double target_train_acc = 0.0;
  int64_t log_every = 1;
  int64_t replicas = 1;

  void validate() const;
  /// Number of active ablation switches (ablate runs require exactly one).
  int active_ablations() const;
};

/// One `key = value` assignment; throws format_error for unknown keys or
/// unparseable values.
void apply_config_value(TrainConfig& cfg, const std::string& key, const std::string& value);

/// Parse file contents in either supported syntax (JSON when the first
/// non-space character is '{', key=value lines otherwise) over `cfg`.
void parse_config_text(TrainConfig& cfg, const std::string& text);
void load_config_file(TrainConfig& cfg, const std::string& path);

/// "key=value" strings from the command line, applied after the file.
void apply_config_overrides(TrainConfig& cfg, const std::vector<std::string>& overrides);

/// STSN_SEED, when set, replaces cfg.seed (highest precedence).
void apply_env_seed(TrainConfig& cfg);

/// Preset architecture with the config's explicit overrides and structural
/// ablations applied; validates the result.
ModelConfig resolve_model_config(const TrainConfig& cfg);

/// Canonical text form of every architecture-determining field of a resolved
/// model configuration. Training hyperparameters (lr, epochs, lambda,
/// dropout) are deliberately absent: checkpoints remain loadable across runs
/// that only differ in those.
std::string architecture_signature(const ModelConfig& cfg);

/// FNV-1a 64-bit hash of architecture_signature(cfg); stored in checkpoints
/// and compared on load.
uint64_t config_hash(const ModelConfig& cfg);

/// Human-readable dump of every field (for logs and report summaries).
std::string describe(const TrainConfig& cfg);

}  // namespace stsn
