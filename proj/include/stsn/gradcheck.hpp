#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "stsn/ops.hpp"
#include "stsn/param.hpp"
#include "stsn/tape.hpp"
#include "stsn/tensor.hpp"

namespace stsn {

struct FdElement {
  int64_t input;     // which input tensor
  int64_t index;     // flat element index within it
  double analytic;
  double numeric;
  double rel_err;
};

struct FdReport {
  double max_rel_err = 0.0;
  FdElement worst{};
  int64_t checked = 0;

  bool ok(double tol) const { return max_rel_err < tol; }
};

/**
 * Central-difference gradient check for a scalar-valued function of several
 * tensors. `build` must be a pure function of its Var inputs: it receives a
 * fresh tape plus leaves for each input and returns a rank-0 output.
 *
 * Per element e:  numeric = (f(x + h e) - f(x - h e)) / 2h
 *                 rel_err = |analytic - numeric| / max(|analytic|, |numeric|, floor * scale)
 * where scale = max(1, largest |analytic| over every checked element). The
 * report carries the max over all elements of all inputs. The floor keeps
 * elements whose true gradient is (near) zero from amplifying the
 * cancellation noise of the difference quotient into spurious relative
 * errors; tying it to the gradient magnitude of the surrounding loss (rather
 * than an absolute constant) keeps the metric meaningful when the loss is
 * strongly scaled, e.g. by a large reconstruction weight.
 */
template <typename Scalar, typename BuildFn>
FdReport finite_difference_check(std::vector<Tensor<Scalar>> inputs, BuildFn build,
                                 double step = 1e-3, double floor = 1e-6) {
  auto eval = [&](const std::vector<Tensor<Scalar>>& xs) {
    Tape<Scalar> tape;
    std::vector<Var<Scalar>> vars;
    vars.reserve(xs.size());
    for (const auto& x : xs) vars.push_back(tape.leaf(x, false));
    Var<Scalar> out = build(tape, vars);
    if (out.rank() != 0) throw contract_error("finite_difference_check needs a scalar output");
    return static_cast<double>(out.val()[0]);
  };

  // analytic gradients
  std::vector<Tensor<Scalar>> grads;
  {
    Tape<Scalar> tape;
    std::vector<Var<Scalar>> vars;
    vars.reserve(inputs.size());
    for (const auto& x : inputs) vars.push_back(tape.leaf(x, true));
    Var<Scalar> out = build(tape, vars);
    if (out.rank() != 0) throw contract_error("finite_difference_check needs a scalar output");
    tape.backward(out);
    for (const auto& v : vars) grads.push_back(v.grad());
  }

  double scale = 1.0;
  for (const auto& g : grads)
    for (int64_t e = 0; e < g.numel(); ++e) scale = std::max(scale, std::abs(double(g[e])));

  FdReport rep;
  for (size_t i = 0; i < inputs.size(); ++i) {
    for (int64_t e = 0; e < inputs[i].numel(); ++e) {
      Scalar saved = inputs[i][e];
      inputs[i][e] = saved + static_cast<Scalar>(step);
      double fp = eval(inputs);
      inputs[i][e] = saved - static_cast<Scalar>(step);
      double fm = eval(inputs);
      inputs[i][e] = saved;
      double numeric = (fp - fm) / (2.0 * step);
      double analytic = static_cast<double>(grads[i][e]);
      double denom = std::max({std::abs(analytic), std::abs(numeric), floor * scale});
      double rel = std::abs(analytic - numeric) / denom;
      rep.checked++;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst = FdElement{static_cast<int64_t>(i), e, analytic, numeric, rel};
      }
    }
  }
  return rep;
}

/**
 * Central-difference check in parameter space, same error metric as
 * finite_difference_check. `loss` must be a pure function of the bound
 * parameters: it receives a fresh tape plus a binding of `store` and returns
 * a rank-0 output (any internal randomness must be re-seeded identically on
 * every call). Every element of every parameter is perturbed;
 * `max_per_param` > 0 limits the check to the first elements of each tensor.
 */
template <typename Scalar, typename LossFn>
FdReport parameter_fd_check(ParamStore<Scalar>& store, LossFn loss, double step = 1e-3,
                            int64_t max_per_param = 0, double floor = 1e-6) {
  auto eval = [&]() {
    Tape<Scalar> tape;
    BoundParams<Scalar> p(store, tape, false);
    Var<Scalar> out = loss(tape, p);
    if (out.rank() != 0) throw contract_error("parameter_fd_check needs a scalar output");
    return static_cast<double>(out.val()[0]);
  };

  std::vector<Tensor<Scalar>> grads;
  {
    Tape<Scalar> tape;
    BoundParams<Scalar> p(store, tape, true);
    Var<Scalar> out = loss(tape, p);
    if (out.rank() != 0) throw contract_error("parameter_fd_check needs a scalar output");
    tape.backward(out);
    for (size_t i = 0; i < p.size(); ++i) grads.push_back(p.at(i).grad());
  }

  double scale = 1.0;
  for (const auto& g : grads)
    for (int64_t e = 0; e < g.numel(); ++e) scale = std::max(scale, std::abs(double(g[e])));

  FdReport rep;
  for (size_t i = 0; i < store.size(); ++i) {
    Tensor<Scalar>& value = store.entry(i).value;
    int64_t limit = max_per_param > 0 ? std::min(max_per_param, value.numel()) : value.numel();
    for (int64_t e = 0; e < limit; ++e) {
      Scalar saved = value[e];
      value[e] = saved + static_cast<Scalar>(step);
      double fp = eval();
      value[e] = saved - static_cast<Scalar>(step);
      double fm = eval();
      value[e] = saved;
      double numeric = (fp - fm) / (2.0 * step);
      double analytic = static_cast<double>(grads[i][e]);
      double denom = std::max({std::abs(analytic), std::abs(numeric), floor * scale});
      double rel = std::abs(analytic - numeric) / denom;
      rep.checked++;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst = FdElement{static_cast<int64_t>(i), e, analytic, numeric, rel};
      }
    }
  }
  return rep;
}

}  // namespace stsn
