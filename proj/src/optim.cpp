#include "h2lo/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace h2lo {

template <typename T>
void adam_step(std::span<Tensor<T>* const> params, AdamState& state, double lr) {
  for (std::size_t p = 0; p < params.size(); ++p) {
    const Tensor<T>& t = *params[p];
    if (t.grad.size() != t.size()) throw DataError("adam_step: parameter " + std::to_string(p) + " has no gradient");
    for (T g : t.grad) {
      if (!std::isfinite(static_cast<double>(g))) {
        throw NumericalError("adam_step: non-finite gradient in parameter " + std::to_string(p));
      }
    }
  }
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), {});
    state.v.assign(params.size(), {});
    for (std::size_t p = 0; p < params.size(); ++p) {
      state.m[p].assign(params[p]->size(), 0.0f);
      state.v[p].assign(params[p]->size(), 0.0f);
    }
  }

  ++state.t;
  const double b1 = state.beta1, b2 = state.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor<T>& t = *params[p];
    auto& m = state.m[p];
    auto& v = state.v[p];
    if (m.size() != t.size()) throw DataError("adam_step: moment shape mismatch");
    for (std::size_t n = 0; n < t.size(); ++n) {
      const double g = static_cast<double>(t.grad[n]);
      const double mn = b1 * m[n] + (1.0 - b1) * g;
      const double vn = b2 * v[n] + (1.0 - b2) * g * g;
      m[n] = static_cast<float>(mn);
      v[n] = static_cast<float>(vn);
      t.values[n] -= static_cast<T>(lr * (mn / c1) / (std::sqrt(vn / c2) + state.eps));
    }
  }
}

template void adam_step(std::span<Tensor<float>* const>, AdamState&, double);
template void adam_step(std::span<Tensor<double>* const>, AdamState&, double);

double cosine_lr(int epoch, const LrSchedule& s) {
  if (s.total_epochs < 1) throw DataError("cosine_lr: total_epochs must be >= 1");
  if (epoch < 0 || epoch >= s.total_epochs) {
    throw DataError("cosine_lr: epoch " + std::to_string(epoch) + " outside [0, " +
                    std::to_string(s.total_epochs - 1) + "]");
  }
  if (s.total_epochs == 1) return s.lr0;
  const double phase = std::numbers::pi * epoch / static_cast<double>(s.total_epochs - 1);
  return s.lr_min + 0.5 * (s.lr0 - s.lr_min) * (1.0 + std::cos(phase));
}

GradCheckResult grad_check(const std::function<double()>& f, std::span<double> params,
                           std::span<const double> analytic, double h) {
  if (params.size() != analytic.size()) throw DataError("grad_check: analytic gradient length mismatch");
  GradCheckResult r;
  for (std::size_t n = 0; n < params.size(); ++n) {
    const double saved = params[n];
    params[n] = saved + h;
    const double fp = f();
    params[n] = saved - h;
    const double fm = f();
    params[n] = saved;
    const double numeric = (fp - fm) / (2.0 * h);
    const double a = analytic[n];
    const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-12});
    if (rel > r.max_rel_error || n == 0) {
      r = {std::max(rel, r.max_rel_error), n, a, numeric};
    }
  }
  return r;
}

}  // namespace h2lo
