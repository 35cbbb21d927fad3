// Command-line driver: dataset generation, training regimes, evaluation,
// ablations, gradient checking, and report emission.
#include <chrono>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stsn/checker.hpp"
#include "stsn/config.hpp"
#include "stsn/dataset.hpp"
#include "stsn/gradcheck.hpp"
#include "stsn/raster.hpp"
#include "stsn/report.hpp"
#include "stsn/trainer.hpp"

using namespace stsn;

namespace {

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<uint64_t> seed;
  std::optional<int64_t> epochs;
  std::optional<double> lr;
  std::optional<int64_t> batch_size;
  std::optional<double> lambda;
  std::optional<std::string> preset;
  std::optional<int64_t> image_size;
  std::optional<int64_t> replicas;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "Config file (key=value lines or JSON)");
  cmd->add_option("--set", o.sets, "Override any config field, e.g. --set lr=1e-3")
      ->take_all();
  cmd->add_option("--seed", o.seed, "Random seed");
  cmd->add_option("--epochs", o.epochs, "Training epochs");
  cmd->add_option("--lr", o.lr, "Base learning rate");
  cmd->add_option("--batch", o.batch_size, "Batch size");
  cmd->add_option("--lambda", o.lambda, "Reconstruction loss weight");
  cmd->add_option("--preset", o.preset, "Architecture preset (full80|full128|desk|micro)");
  cmd->add_option("--image-size", o.image_size, "Square panel resolution");
  cmd->add_option("--replicas", o.replicas, "Train N seeds and report max and mean");
}

TrainConfig build_config(const CommonOpts& o) {
  TrainConfig cfg;
  if (!o.config_path.empty()) load_config_file(cfg, o.config_path);
  apply_config_overrides(cfg, o.sets);  // CLI overrides file values
  if (o.preset) cfg.preset = preset_from_string(*o.preset);
  if (o.image_size) cfg.image_size = *o.image_size;
  if (o.seed) cfg.seed = *o.seed;
  if (o.epochs) cfg.epochs = *o.epochs;
  if (o.lr) cfg.lr = *o.lr;
  if (o.batch_size) cfg.batch_size = *o.batch_size;
  if (o.lambda) cfg.lambda = *o.lambda;
  if (o.replicas) cfg.replicas = *o.replicas;
  apply_env_seed(cfg);  // STSN_SEED outranks both
  cfg.validate();
  return cfg;
}

std::vector<MatrixProblem> load_data(const std::string& path, const ModelConfig& mc) {
  std::vector<MatrixProblem> problems = read_dataset(path);
  if (problems.empty()) throw contract_error("dataset " + path + " is empty");
  const MatrixProblem& p = problems.front();
  if (p.image_h != mc.encoder.image_h || p.image_w != mc.encoder.image_w ||
      int64_t(p.channels) != mc.encoder.in_channels)
    throw contract_error("dataset " + path + " is " + std::to_string(p.image_h) + "x" +
                         std::to_string(p.image_w) + "x" + std::to_string(p.channels) +
                         " but the model expects " + std::to_string(mc.encoder.image_h) + "x" +
                         std::to_string(mc.encoder.image_w) + "x" +
                         std::to_string(mc.encoder.in_channels));
  return problems;
}

void print_eval(const char* label, const EvalResult& r) {
  std::printf("%s: accuracy %.4f (%lld/%lld), mean reconstruction loss %.6f\n", label,
              r.accuracy(), (long long)r.correct, (long long)r.total, r.mean_recon);
  const char* names[3] = {"logic", "location", "count"};
  for (int t = 0; t < 3; ++t)
    if (r.type_total[size_t(t)] > 0)
      std::printf("  %-8s %.4f (%lld/%lld)\n", names[t], r.type_accuracy(ProblemType(t)),
                  (long long)r.type_correct[size_t(t)], (long long)r.type_total[size_t(t)]);
}

double replica_score(const TrainResult& res) {
  return res.best_val_acc >= 0.0 ? res.best_val_acc : res.final_train_acc;
}

int run_training(const TrainConfig& base_cfg, const std::string& data_path,
                 const std::string& val_path, const std::string& extra_path,
                 const std::string& out_path, const std::string& report_dir,
                 int64_t grid_count) {
  ModelConfig mc = resolve_model_config(base_cfg);
  std::vector<MatrixProblem> train_set = load_data(data_path, mc);
  std::vector<MatrixProblem> val_set, extra_set;
  if (!val_path.empty()) val_set = load_data(val_path, mc);
  if (!extra_path.empty()) extra_set = load_data(extra_path, mc);

  double best_score = -1.0, score_sum = 0.0;
  for (int64_t r = 0; r < base_cfg.replicas; ++r) {
    TrainConfig cfg = base_cfg;
    cfg.seed = base_cfg.seed + uint64_t(r);
    if (base_cfg.replicas > 1)
      std::printf("=== replica %lld/%lld (seed %llu) ===\n", (long long)(r + 1),
                  (long long)base_cfg.replicas, (unsigned long long)cfg.seed);
    Trainer trainer(cfg);
    std::printf("architecture %s\nparameters %lld, hash %llu\n",
                architecture_signature(mc).c_str(),
                (long long)trainer.model().params().scalar_count(),
                (unsigned long long)trainer.arch_hash());
    TrainResult res = trainer.fit(train_set, val_set.empty() ? nullptr : &val_set,
                                  extra_set.empty() ? nullptr : &extra_set);
    if (trainer.has_best()) trainer.restore_best();
    double score = replica_score(res);
    std::printf("replica result: train acc %.4f, val acc %.4f (best %.4f), %lld steps%s\n",
                res.final_train_acc, res.final_val_acc, res.best_val_acc,
                (long long)res.global_steps, res.reached_target ? ", target reached" : "");
    score_sum += score;
    if (score > best_score) {
      best_score = score;
      if (!out_path.empty()) {
        trainer.save(out_path);
        std::printf("saved checkpoint: %s\n", out_path.c_str());
      }
      if (!report_dir.empty()) {
        const std::vector<MatrixProblem>& samples = val_set.empty() ? train_set : val_set;
        emit_report(report_dir, trainer, res, samples, grid_count);
        std::printf("wrote report: %s\n", report_dir.c_str());
      }
    }
  }
  if (base_cfg.replicas > 1)
    std::printf("replicas: max %.4f, mean %.4f\n", best_score,
                score_sum / double(base_cfg.replicas));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Slot-transformer scoring network: training, evaluation, and data tools"};
  app.require_subcommand(1);

  // --- generate ---
  auto* gen = app.add_subcommand("generate", "Generate a problem dataset");
  std::string gen_type = "all", gen_out;
  int64_t gen_n = 100, gen_size = 48;
  uint64_t gen_seed = 0;
  bool gen_no_verify = false;
  gen->add_option("--type", gen_type, "logic|location|count|all")->capture_default_str();
  gen->add_option("--n", gen_n, "Problem count")->capture_default_str();
  gen->add_option("--seed", gen_seed, "Generator seed")->capture_default_str();
  gen->add_option("--size", gen_size, "Square panel resolution")->capture_default_str();
  gen->add_option("--out", gen_out, "Output dataset path")->required();
  gen->add_flag("--no-verify", gen_no_verify, "Skip the independent rule checker");

  // --- train / dual-train / pretrain-recon / ablate ---
  CommonOpts train_o, dual_o, pre_o, abl_o, eval_o, rep_o, grad_o;
  std::string train_data, train_val, train_out, train_report;
  int64_t train_grids = 4;
  auto* train = app.add_subcommand("train", "Standard task training");
  add_common(train, train_o);
  train->add_option("--data", train_data, "Training dataset")->required();
  train->add_option("--val", train_val, "Validation dataset");
  train->add_option("--out", train_out, "Checkpoint output path");
  train->add_option("--report", train_report, "Report directory");
  train->add_option("--grids", train_grids, "Slot grids in the report")->capture_default_str();

  std::string dual_data, dual_extra, dual_val, dual_out, dual_report;
  auto* dual = app.add_subcommand("dual-train", "Task training with an extra reconstruction set");
  add_common(dual, dual_o);
  dual->add_option("--data", dual_data, "Task training dataset")->required();
  dual->add_option("--extra", dual_extra, "Extra reconstruction-only dataset")->required();
  dual->add_option("--val", dual_val, "Validation dataset");
  dual->add_option("--out", dual_out, "Checkpoint output path");
  dual->add_option("--report", dual_report, "Report directory");

  std::string pre_data, pre_out;
  auto* pre = app.add_subcommand("pretrain-recon",
                                 "Reconstruction-only pretraining of the encoder stack");
  add_common(pre, pre_o);
  pre->add_option("--data", pre_data, "Image dataset (labels unused)")->required();
  pre->add_option("--out", pre_out, "Partial checkpoint output path")->required();

  std::string abl_flag, abl_data, abl_val, abl_out, abl_report;
  auto* abl = app.add_subcommand("ablate", "Train one ablation variant");
  add_common(abl, abl_o);
  abl->add_option("--flag", abl_flag,
                  "no_slot_attention|no_tcn|small_transformer_L4|no_augmentations|no_dropout")
      ->required();
  abl->add_option("--data", abl_data, "Training dataset")->required();
  abl->add_option("--val", abl_val, "Validation dataset");
  abl->add_option("--out", abl_out, "Checkpoint output path");
  abl->add_option("--report", abl_report, "Report directory");

  // --- eval ---
  std::string eval_ckpt, eval_data;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  add_common(ev, eval_o);
  ev->add_option("--ckpt", eval_ckpt, "Checkpoint path")->required();
  ev->add_option("--data", eval_data, "Evaluation dataset")->required();

  // --- report ---
  std::string rep_ckpt, rep_data, rep_dir;
  int64_t rep_grids = 4;
  auto* rep = app.add_subcommand("report", "Emit summary and slot grids for a checkpoint");
  add_common(rep, rep_o);
  rep->add_option("--ckpt", rep_ckpt, "Checkpoint path")->required();
  rep->add_option("--data", rep_data, "Sample dataset")->required();
  rep->add_option("--out", rep_dir, "Report directory")->required();
  rep->add_option("--grids", rep_grids, "Slot grid count")->capture_default_str();

  // --- gradcheck ---
  // Step 1e-6 balances truncation (dominant at 1e-5 on this lambda-scaled
  // loss) against cancellation noise (dominant at 1e-7); the floor absorbs
  // the ~2e-6 absolute resolution limit of double central differences here.
  double grad_step = 1e-6, grad_tol = 1e-3, grad_floor = 5e-6;
  auto* grad = app.add_subcommand("gradcheck",
                                  "End-to-end finite-difference check on the micro model");
  add_common(grad, grad_o);
  grad->add_option("--step", grad_step, "Central-difference step")->capture_default_str();
  grad->add_option("--tol", grad_tol, "Max relative error tolerance")->capture_default_str();
  grad->add_option("--floor", grad_floor, "Relative-error denominator floor (times the gradient scale)")
      ->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      std::vector<ProblemType> types;
      if (gen_type == "all")
        types = {ProblemType::logic, ProblemType::location, ProblemType::count};
      else
        types = {problem_type_from_string(gen_type)};
      std::vector<MatrixProblem> problems;
      problems.reserve(size_t(gen_n));
      for (int64_t i = 0; i < gen_n; ++i) {
        MatrixProblem p = generate_problem(types[size_t(i) % types.size()], gen_seed, i);
        rasterize_problem(p, gen_size, gen_size);
        if (!gen_no_verify) {
          CheckResult c = check_problem(p);
          if (!c.ok)
            throw generation_error("generated problem " + std::to_string(i) +
                                   " failed verification: " + c.reason);
        }
        problems.push_back(std::move(p));
      }
      write_dataset(problems, gen_out);
      std::printf("wrote %lld problems (%lldx%lld) to %s\n", (long long)gen_n,
                  (long long)gen_size, (long long)gen_size, gen_out.c_str());
      return 0;
    }

    if (train->parsed())
      return run_training(build_config(train_o), train_data, train_val, "", train_out,
                          train_report, train_grids);

    if (dual->parsed()) {
      TrainConfig cfg = build_config(dual_o);
      cfg.regime = Regime::dual_train;
      return run_training(cfg, dual_data, dual_val, dual_extra, dual_out, dual_report, 4);
    }

    if (pre->parsed()) {
      TrainConfig cfg = build_config(pre_o);
      cfg.regime = Regime::recon_pretrain;
      ModelConfig mc = resolve_model_config(cfg);
      std::vector<MatrixProblem> set = load_data(pre_data, mc);
      Trainer trainer(cfg);
      TrainResult res = trainer.pretrain(set);
      trainer.save(pre_out, /*encoder_stack_only=*/true);
      double first = res.steps.empty() ? 0.0 : res.steps.front().recon;
      double last = res.steps.empty() ? 0.0 : res.steps.back().recon;
      std::printf("pretrained %lld steps: reconstruction loss %.6f -> %.6f\n",
                  (long long)res.global_steps, first, last);
      std::printf("saved encoder-stack checkpoint: %s\n", pre_out.c_str());
      return 0;
    }

    if (abl->parsed()) {
      TrainConfig cfg = build_config(abl_o);
      if (cfg.active_ablations() != 0)
        throw contract_error("ablate: config already sets an ablation flag; pass --flag only");
      apply_config_value(cfg, abl_flag, "true");  // rejects unknown flag names
      if (cfg.active_ablations() != 1)
        throw contract_error("'" + abl_flag + "' is not an ablation flag");
      return run_training(cfg, abl_data, abl_val, "", abl_out, abl_report, 4);
    }

    if (ev->parsed()) {
      TrainConfig cfg = build_config(eval_o);
      ModelConfig mc = resolve_model_config(cfg);
      std::vector<MatrixProblem> set = load_data(eval_data, mc);
      Trainer trainer(cfg);
      trainer.load(eval_ckpt);
      EvalResult r = trainer.evaluate(set);
      print_eval("eval", r);
      return 0;
    }

    if (rep->parsed()) {
      TrainConfig cfg = build_config(rep_o);
      ModelConfig mc = resolve_model_config(cfg);
      std::vector<MatrixProblem> set = load_data(rep_data, mc);
      Trainer trainer(cfg);
      trainer.load(rep_ckpt);
      emit_report(rep_dir, trainer, TrainResult{}, set, rep_grids);
      std::printf("wrote report: %s\n", rep_dir.c_str());
      return 0;
    }

    if (grad->parsed()) {
      TrainConfig cfg = build_config(grad_o);
      StsnModel<double> model(ModelConfig::micro(), cfg.seed + 82);
      Rng ir = Rng::derive(cfg.seed, {kStreamProblem, 7});
      Tensor<double> images = Tensor<double>::uniform({16, 1, 8, 8}, ir, 0.0, 1.0);
      auto loss = [&](Tape<double>& tape, const BoundParams<double>& p) {
        Rng sr(21);
        return model.forward(tape, p, images, 5, &sr, nullptr).total;
      };
      auto t0 = std::chrono::steady_clock::now();
      FdReport fd = parameter_fd_check(model.params(), loss, grad_step, 0, grad_floor);
      double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::printf("checked %lld parameter elements in %.1f s\n", (long long)fd.checked, secs);
      std::printf("max relative error %.3e (analytic %.6e, numeric %.6e)\n", fd.max_rel_err,
                  fd.worst.analytic, fd.worst.numeric);
      std::printf("gradcheck %s (tolerance %.1e)\n", fd.ok(grad_tol) ? "PASS" : "FAIL", grad_tol);
      return fd.ok(grad_tol) ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
