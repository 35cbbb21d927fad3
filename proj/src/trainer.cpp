#include "stsn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "stsn/errors.hpp"
#include "stsn/ops.hpp"
#include "stsn/raster.hpp"

namespace stsn {

namespace {

// Extra-reconstruction problems get their own noise streams: the final path
// element keeps them disjoint from the task set's streams at equal indices.
constexpr uint64_t kTaskSet = 0;
constexpr uint64_t kExtraSet = 1;

std::vector<size_t> shuffled_indices(size_t n, Rng& rng) {
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t(0));
  for (size_t i = n; i > 1; --i) {
    size_t j = size_t(rng.uniform_int(int64_t(i)));
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

}  // namespace

Trainer::Trainer(const TrainConfig& cfg) : Trainer(cfg, resolve_model_config(cfg)) {}

Trainer::Trainer(const TrainConfig& cfg, const ModelConfig& model_cfg)
    : cfg_(cfg),
      model_cfg_(model_cfg),
      hash_(config_hash(model_cfg)),
      model_(model_cfg, cfg.seed) {
  cfg_.validate();
}

TrainResult Trainer::fit(const std::vector<MatrixProblem>& train_set,
                         const std::vector<MatrixProblem>* val_set,
                         const std::vector<MatrixProblem>* extra_recon) {
  if (extra_recon != nullptr && extra_recon->empty()) extra_recon = nullptr;
  return run(train_set, val_set, extra_recon, /*recon_only=*/false);
}

TrainResult Trainer::pretrain(const std::vector<MatrixProblem>& image_set) {
  return run(image_set, nullptr, nullptr, /*recon_only=*/true);
}

TrainResult Trainer::run(const std::vector<MatrixProblem>& train_set,
                         const std::vector<MatrixProblem>* val_set,
                         const std::vector<MatrixProblem>* extra_recon, bool recon_only) {
  if (train_set.empty()) throw contract_error("training set is empty");
  ParamStore<float>& store = model_.params();
  const double lambda = model_cfg_.lambda;
  const bool dual = extra_recon != nullptr;
  const bool use_dropout = model_cfg_.reasoner.dropout > 0.0;
  const bool use_augment = !cfg_.no_augmentations;

  TrainResult result;
  std::vector<Tensor<float>> grads;
  grads.reserve(store.size());
  for (size_t i = 0; i < store.size(); ++i)
    grads.push_back(Tensor<float>::zeros(store.entry(i).value.shape()));

  const size_t n = train_set.size();
  size_t extra_cursor = 0;
  std::vector<size_t> extra_order;

  // Resume support: epoch-derived randomness streams continue from the
  // restored step count, so an interrupted run stitched back together via
  // save/load reproduces an uninterrupted one bitwise (same data and batch).
  const int64_t steps_per_epoch = (int64_t(n) + cfg_.batch_size - 1) / cfg_.batch_size;
  const int64_t epoch0 = global_step_ / steps_per_epoch;

  for (int64_t epoch = epoch0; epoch < epoch0 + cfg_.epochs; ++epoch) {
    Rng shuffle_rng = Rng::derive(cfg_.seed, {kStreamShuffle, uint64_t(epoch), kTaskSet});
    std::vector<size_t> order = shuffled_indices(n, shuffle_rng);
    if (dual) {
      Rng ex_rng = Rng::derive(cfg_.seed, {kStreamShuffle, uint64_t(epoch), kExtraSet});
      extra_order = shuffled_indices(extra_recon->size(), ex_rng);
      extra_cursor = 0;
    }

    double epoch_total = 0.0;
    int64_t epoch_steps = 0;

    for (size_t start = 0; start < n; start += size_t(cfg_.batch_size)) {
      const size_t kb = std::min(size_t(cfg_.batch_size), n - start);
      for (auto& g : grads) std::fill(g.data(), g.data() + g.numel(), 0.0f);
      double recon_sum = 0.0, task_sum = 0.0, extra_recon_sum = 0.0;

      auto accumulate = [&](const BoundParams<float>& p) {
        for (size_t i = 0; i < store.size(); ++i) {
          const Tensor<float>& g = p.at(i).grad();
          float* acc = grads[i].data();
          const float* src = g.data();
          for (int64_t e = 0; e < g.numel(); ++e) acc[e] += src[e];
        }
      };
      auto check_finite = [&](double v, const char* what, size_t idx) {
        if (!std::isfinite(v)) {
          std::ostringstream os;
          os << "non-finite " << what << " (" << v << ") at epoch " << epoch << ", step "
             << global_step_ << ", problem " << idx << "; aborting";
          throw numeric_error(os.str());
        }
      };

      for (size_t b = 0; b < kb; ++b) {
        const size_t idx = order[start + b];
        const MatrixProblem& prob = train_set[idx];
        Tensor<float> images = problem_images(prob);
        if (use_augment) {
          Rng ar = Rng::derive(cfg_.seed,
                               {kStreamAugment, uint64_t(epoch), uint64_t(idx), kTaskSet});
          images = augment(images, ar);
        }
        Rng sr =
            Rng::derive(cfg_.seed, {kStreamSlots, uint64_t(epoch), uint64_t(idx), kTaskSet});
        Rng dr =
            Rng::derive(cfg_.seed, {kStreamDropout, uint64_t(epoch), uint64_t(idx), kTaskSet});

        Tape<float> tape;
        BoundParams<float> p(store, tape, /*trainable=*/true);
        Var<float> loss;
        if (recon_only) {
          ReconResult<float> rec = model_.reconstruct(tape, p, images, &sr);
          loss = rec.recon_loss;
          recon_sum += double(rec.recon_loss.val()[0]);
        } else {
          ForwardResult<float> fwd = model_.forward(tape, p, images, prob.answer, &sr,
                                                    use_dropout ? &dr : nullptr);
          // Dual training halves the reconstruction weight on the task set;
          // the extra set contributes the other half below.
          loss = dual ? total_loss(fwd.recon_loss, fwd.task_loss, lambda / 2.0) : fwd.total;
          recon_sum += double(fwd.recon_loss.val()[0]);
          task_sum += double(fwd.task_loss.val()[0]);
        }
        check_finite(double(loss.val()[0]), "loss", idx);
        tape.backward(loss);
        accumulate(p);
      }

      if (dual) {
        for (size_t b = 0; b < kb; ++b) {
          const size_t jdx = extra_order[extra_cursor];
          extra_cursor = (extra_cursor + 1) % extra_order.size();
          const MatrixProblem& prob = (*extra_recon)[jdx];
          Tensor<float> images = problem_images(prob);
          if (use_augment) {
            Rng ar = Rng::derive(cfg_.seed,
                                 {kStreamAugment, uint64_t(epoch), uint64_t(jdx), kExtraSet});
            images = augment(images, ar);
          }
          Rng sr = Rng::derive(cfg_.seed,
                               {kStreamSlots, uint64_t(epoch), uint64_t(jdx), kExtraSet});
          Tape<float> tape;
          BoundParams<float> p(store, tape, /*trainable=*/true);
          ReconResult<float> rec = model_.reconstruct(tape, p, images, &sr);
          Var<float> loss = scale(rec.recon_loss, float(lambda / 2.0));
          extra_recon_sum += double(rec.recon_loss.val()[0]);
          check_finite(double(loss.val()[0]), "extra reconstruction loss", jdx);
          tape.backward(loss);
          accumulate(p);
        }
      }

      const float inv = 1.0f / float(kb);
      for (auto& g : grads)
        for (int64_t e = 0; e < g.numel(); ++e) g.data()[e] *= inv;

      ++global_step_;
      const double lr = lr_at_step(cfg_.lr, global_step_, cfg_.warmup_steps);
      opt_.step(store, grads, lr);

      StepMetrics m;
      m.step = global_step_;
      m.epoch = epoch;
      m.lr = lr;
      m.task = task_sum / double(kb);
      if (recon_only) {
        m.recon = recon_sum / double(kb);
        m.total = m.recon;  // single-objective regime: L is L_recon itself
      } else {
        m.recon = dual ? (recon_sum + extra_recon_sum) / (2.0 * double(kb))
                       : recon_sum / double(kb);
        m.total = lambda * m.recon + m.task;
      }
      check_finite(m.total, "batch loss", order[start]);
      epoch_total += m.total;
      ++epoch_steps;
      if (global_step_ % cfg_.log_every == 0) result.steps.push_back(m);
    }

    EpochMetrics em;
    em.epoch = epoch;
    em.mean_total = epoch_steps > 0 ? epoch_total / double(epoch_steps) : 0.0;
    const bool measure =
        cfg_.eval_every > 0 && ((epoch - epoch0 + 1) % cfg_.eval_every == 0 ||
                                epoch + 1 == epoch0 + cfg_.epochs);
    if (measure && !recon_only) {
      em.train_acc = evaluate(train_set, cfg_.train_eval_limit).accuracy();
      result.final_train_acc = em.train_acc;
      if (val_set != nullptr) {
        em.val_acc = evaluate(*val_set, cfg_.val_eval_limit).accuracy();
        result.final_val_acc = em.val_acc;
        if (em.val_acc > best_val_acc_) snapshot_best(em.val_acc);
      }
    }
    result.epochs.push_back(em);
    if (measure && !recon_only && cfg_.target_train_acc > 0.0 &&
        em.train_acc >= cfg_.target_train_acc) {
      result.reached_target = true;
      break;
    }
  }
  result.global_steps = global_step_;
  result.best_val_acc = best_val_acc_;
  return result;
}

EvalResult Trainer::evaluate(const std::vector<MatrixProblem>& set, int64_t limit) {
  EvalResult r;
  const size_t n = limit > 0 ? std::min(set.size(), size_t(limit)) : set.size();
  for (size_t i = 0; i < n; ++i) {
    const MatrixProblem& prob = set[i];
    Tensor<float> images = problem_images(prob);
    Tape<float> tape;
    BoundParams<float> p(model_.params(), tape, /*trainable=*/false);
    // Slot noise from the fixed evaluation stream (see kEvalSeed) and no
    // dropout: deterministic, and independent of the training seed.
    Rng sr = Rng::derive(kEvalSeed, {kStreamSlots, uint64_t(i)});
    ForwardResult<float> fwd = model_.forward(tape, p, images, prob.answer, &sr, nullptr);
    ++r.total;
    ++r.type_total[size_t(prob.type)];
    if (fwd.prediction == prob.answer) {
      ++r.correct;
      ++r.type_correct[size_t(prob.type)];
    }
    r.mean_recon += double(fwd.recon_loss.val()[0]);
  }
  if (r.total > 0) r.mean_recon /= double(r.total);
  return r;
}

void Trainer::snapshot_best(double val_acc) {
  ParamStore<float>& store = model_.params();
  best_params_.clear();
  best_params_.reserve(store.size());
  for (size_t i = 0; i < store.size(); ++i) best_params_.push_back(store.entry(i).value);
  best_val_acc_ = val_acc;
  has_best_ = true;
}

void Trainer::restore_best() {
  if (!has_best_) throw contract_error("no best-validation snapshot recorded");
  ParamStore<float>& store = model_.params();
  for (size_t i = 0; i < store.size(); ++i) store.entry(i).value = best_params_[i];
}

void Trainer::save(const std::string& path, bool encoder_stack_only) const {
  const ParamStore<float>& store = model_.params();
  Checkpoint ckpt;
  ckpt.arch_hash = hash_;
  for (size_t i = 0; i < store.size(); ++i) {
    const auto& e = store.entry(i);
    if (encoder_stack_only && e.name.rfind("rsn.", 0) == 0) continue;
    ckpt.tensors.emplace_back(e.name, e.value);
  }
  if (!encoder_stack_only && opt_.steps() > 0) {
    const auto& m = opt_.first_moments();
    const auto& v = opt_.second_moments();
    for (size_t i = 0; i < store.size(); ++i) {
      ckpt.tensors.emplace_back("opt.m." + store.entry(i).name, m[i]);
      ckpt.tensors.emplace_back("opt.v." + store.entry(i).name, v[i]);
    }
    // f32 holds integers exactly up to 2^24; step counts here stay far below.
    ckpt.tensors.emplace_back("opt.t", Tensor<float>({1}, {float(opt_.steps())}));
    ckpt.tensors.emplace_back("train.step", Tensor<float>({1}, {float(global_step_)}));
  }
  save_checkpoint(path, ckpt);
}

void Trainer::load(const std::string& path, bool allow_partial) {
  Checkpoint ckpt = load_checkpoint(path, hash_);
  ParamStore<float>& store = model_.params();
  for (size_t i = 0; i < store.size(); ++i) {
    auto& e = store.entry(i);
    if (!ckpt.has(e.name)) {
      if (allow_partial) continue;
      throw format_error("checkpoint " + path + " is missing parameter '" + e.name + "'");
    }
    const Tensor<float>& t = ckpt.at(e.name);
    if (t.shape() != e.value.shape())
      throw shape_error("checkpoint parameter '" + e.name + "' has mismatched shape");
    e.value = t;
  }
  if (ckpt.has("opt.t")) {
    std::vector<Tensor<float>> m, v;
    m.reserve(store.size());
    v.reserve(store.size());
    for (size_t i = 0; i < store.size(); ++i) {
      const std::string& name = store.entry(i).name;
      if (!ckpt.has("opt.m." + name) || !ckpt.has("opt.v." + name))
        throw format_error("checkpoint " + path + " has incomplete optimizer state");
      m.push_back(ckpt.at("opt.m." + name));
      v.push_back(ckpt.at("opt.v." + name));
    }
    opt_.restore(std::move(m), std::move(v), int64_t(ckpt.at("opt.t")[0]));
    if (ckpt.has("train.step")) global_step_ = int64_t(ckpt.at("train.step")[0]);
  }
}

}  // namespace stsn
