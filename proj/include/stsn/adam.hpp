#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "stsn/param.hpp"
#include "stsn/tensor.hpp"

namespace stsn {

/**
 * ADAM with bias correction. Moment state is kept per parameter in store
 * order; `step` consumes the gradients sitting on a BoundParams snapshot and
 * writes the update back into the master tensors.
 *
 *   m ← β1 m + (1-β1) g        m̂ = m / (1 - β1^t)
 *   v ← β2 v + (1-β2) g²       v̂ = v / (1 - β2^t)
 *   p ← p - lr · m̂ / (√v̂ + ε)
 */
template <typename Scalar>
class Adam {
 public:
  explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  int64_t steps() const { return t_; }

  void step(ParamStore<Scalar>& store, const BoundParams<Scalar>& bound, double lr) {
    if (bound.size() != store.size())
      throw contract_error("adam: bound snapshot does not match the parameter store");
    std::vector<Tensor<Scalar>> grads;
    grads.reserve(bound.size());
    for (size_t i = 0; i < bound.size(); ++i) grads.push_back(bound.at(i).grad());
    step(store, grads, lr);
  }

  /// Same update from externally accumulated gradients (one tensor per store
  /// entry, in store order), e.g. summed over several per-problem tapes.
  void step(ParamStore<Scalar>& store, const std::vector<Tensor<Scalar>>& grads, double lr) {
    if (lr < 0.0) throw contract_error("adam learning rate must be nonnegative");
    if (grads.size() != store.size())
      throw contract_error("adam: gradient list does not match the parameter store");
    if (m_.empty()) {
      m_.reserve(store.size());
      v_.reserve(store.size());
      for (size_t i = 0; i < store.size(); ++i) {
        m_.push_back(Tensor<Scalar>::zeros(store.entry(i).value.shape()));
        v_.push_back(Tensor<Scalar>::zeros(store.entry(i).value.shape()));
      }
    }
    ++t_;
    Scalar b1 = static_cast<Scalar>(beta1_);
    Scalar b2 = static_cast<Scalar>(beta2_);
    Scalar corr1 = static_cast<Scalar>(1.0 / (1.0 - std::pow(beta1_, double(t_))));
    Scalar corr2 = static_cast<Scalar>(1.0 / (1.0 - std::pow(beta2_, double(t_))));
    Scalar step_size = static_cast<Scalar>(lr);
    Scalar eps = static_cast<Scalar>(eps_);
    for (size_t i = 0; i < store.size(); ++i) {
      Tensor<Scalar>& p = store.entry(i).value;
      const Tensor<Scalar>& g = grads[i];
      if (g.shape() != p.shape())
        throw shape_error("adam: gradient shape does not match its parameter");
      Tensor<Scalar>& m = m_[i];
      Tensor<Scalar>& v = v_[i];
      Scalar* pp = p.data();
      const Scalar* pg = g.data();
      Scalar* pm = m.data();
      Scalar* pv = v.data();
      int64_t n = p.numel();
      for (int64_t e = 0; e < n; ++e) {
        pm[e] = b1 * pm[e] + (Scalar(1) - b1) * pg[e];
        pv[e] = b2 * pv[e] + (Scalar(1) - b2) * pg[e] * pg[e];
        Scalar mhat = pm[e] * corr1;
        Scalar vhat = pv[e] * corr2;
        pp[e] -= step_size * mhat / (std::sqrt(vhat) + eps);
      }
    }
  }

  // Serializable optimizer state (first/second moments and step count).
  const std::vector<Tensor<Scalar>>& first_moments() const { return m_; }
  const std::vector<Tensor<Scalar>>& second_moments() const { return v_; }
  void restore(std::vector<Tensor<Scalar>> m, std::vector<Tensor<Scalar>> v, int64_t t) {
    if (m.size() != v.size()) throw contract_error("adam: moment lists differ in length");
    if (t < 0) throw contract_error("adam: negative step count");
    m_ = std::move(m);
    v_ = std::move(v);
    t_ = t;
  }

 private:
  double beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::vector<Tensor<Scalar>> m_;
  std::vector<Tensor<Scalar>> v_;
};

/// Linear warmup to `base_lr` over `warmup_steps`, constant afterwards.
/// `step` is 1-based (the first optimizer step passes 1).
inline double lr_at_step(double base_lr, int64_t step, int64_t warmup_steps) {
  if (warmup_steps <= 0 || step >= warmup_steps) return base_lr;
  return base_lr * double(step) / double(warmup_steps);
}

}  // namespace stsn
