#pragma once

#include <functional>
#include <string>
#include <vector>

#include "uniprompt/tape.hpp"

namespace uniprompt {

// Central finite differences against the tape gradient. Returns the max over
// coordinates of |analytic - numeric| / max(1, |numeric|). 64-bit only.
inline double grad_check(const std::function<Var(Tape&, Var)>& f, const Tensor& point,
                         double h = 1e-5) {
  Tape tp(true);
  Var x = tp.put(point);
  Var loss = f(tp, x);
  tp.backward(loss);
  const Tensor analytic = tp.grad(x);

  double worst = 0.0;
  Tensor p = point;
  for (std::size_t i = 0; i < p.data.size(); ++i) {
    const double orig = p.data[i];
    p.data[i] = orig + h;
    Tape tp_hi(false);
    const double f_hi = tp_hi.scalar(f(tp_hi, tp_hi.put(p)));
    p.data[i] = orig - h;
    Tape tp_lo(false);
    const double f_lo = tp_lo.scalar(f(tp_lo, tp_lo.put(p)));
    p.data[i] = orig;
    const double numeric = (f_hi - f_lo) / (2.0 * h);
    const double rel = std::abs(analytic.data[i] - numeric) / std::max(1.0, std::abs(numeric));
    worst = std::max(worst, rel);
  }
  return worst;
}

struct ParamGradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
};

// Checks every coordinate of every named parameter against central
// differences. `loss` must rebuild the full computation through the binder so
// perturbed parameter values are picked up, and `visit` must enumerate
// parameters in a stable order.
template <typename VisitFn>
ParamGradCheckResult grad_check_params(const std::function<Var(Tape&, Binder&)>& loss,
                                       const VisitFn& visit, double h = 1e-4) {
  Tape tp(true);
  Binder bind(tp);
  Var l = loss(tp, bind);
  tp.backward(l);

  std::vector<std::pair<std::string, Tensor*>> params;
  visit([&](const std::string& name, Tensor& t) { params.emplace_back(name, &t); });

  ParamGradCheckResult result;
  for (auto& [name, t] : params) {
    const Tensor analytic = bind.grad_of(*t);
    for (std::size_t i = 0; i < t->data.size(); ++i) {
      const double orig = t->data[i];
      t->data[i] = orig + h;
      Tape tp_hi(false);
      Binder b_hi(tp_hi);
      const double f_hi = tp_hi.scalar(loss(tp_hi, b_hi));
      t->data[i] = orig - h;
      Tape tp_lo(false);
      Binder b_lo(tp_lo);
      const double f_lo = tp_lo.scalar(loss(tp_lo, b_lo));
      t->data[i] = orig;
      const double numeric = (f_hi - f_lo) / (2.0 * h);
      const double rel = std::abs(analytic.data[i] - numeric) / std::max(1.0, std::abs(numeric));
      if (rel > result.max_rel_err) {
        result.max_rel_err = rel;
        result.worst_param = name;
      }
    }
  }
  return result;
}

}  // namespace uniprompt
