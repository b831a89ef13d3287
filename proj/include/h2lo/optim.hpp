#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "h2lo/tensor.hpp"

namespace h2lo {

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t t = 0;
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
};

/// One bias-corrected Adam update using each tensor's `grad`. Moments are
/// created on first use. Throws NumericalError (before touching anything) if
/// any gradient is non-finite.
template <typename T>
void adam_step(std::span<Tensor<T>* const> params, AdamState& state, double lr);

struct LrSchedule {
  double lr0 = 1e-4;
  double lr_min = 1e-6;
  int total_epochs = 500;
};

/// lr_min + (lr0 - lr_min)(1 + cos(pi e / (E-1))) / 2. With E == 1 the only
/// epoch uses lr0.
double cosine_lr(int epoch, const LrSchedule& sched);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares `analytic` against central differences of `f` taken by perturbing
/// `params` in place (restored afterwards). Relative error per entry is
/// |a - n| / max(|a|, |n|, 1e-12).
GradCheckResult grad_check(const std::function<double()>& f, std::span<double> params,
                           std::span<const double> analytic, double h = 1e-4);

}  // namespace h2lo
