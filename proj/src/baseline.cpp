#include "h2lo/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "h2lo/error.hpp"

namespace h2lo {

bool BaselineParams::valid() const {
  return std::isfinite(sigma_smooth) && std::isfinite(sigma_noise) && std::isfinite(scale) && std::isfinite(offset) &&
         sigma_smooth >= 0.0 && sigma_noise >= 0.0 && scale > 0.0;
}

void BaselineParams::validate() const {
  if (!valid()) {
    throw DataError("invalid baseline parameters: need sigma_smooth >= 0, sigma_noise >= 0, scale > 0, all finite");
  }
}

Volume3D apply_baseline_with_noise(const Volume3D& hf, const BaselineParams& p, std::span<const float> unit_noise) {
  p.validate();
  if (p.sigma_noise > 0.0 && unit_noise.size() != hf.size()) throw DataError("noise field size differs from volume");
  Volume3D out = gaussian_blur(hf, p.sigma_smooth);
  for (std::size_t n = 0; n < out.size(); ++n) {
    double v = p.scale * out[n] + p.offset;
    if (p.sigma_noise > 0.0) v += p.sigma_noise * unit_noise[n];
    out[n] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  return out;
}

Volume3D apply_baseline(const Volume3D& hf, const BaselineParams& p, Rng* rng) {
  p.validate();
  std::vector<float> noise;
  if (p.sigma_noise > 0.0) {
    if (rng == nullptr) throw DataError("apply_baseline: sigma_noise > 0 needs an rng");
    noise.resize(hf.size());
    for (float& z : noise) z = static_cast<float>(rng->normal());
  }
  return apply_baseline_with_noise(hf, p, noise);
}

Volume3D gradient_magnitude(const Volume3D& v) {
  const Dims d = v.dims();
  Volume3D out(d);
  const auto diff = [&](int i, int j, int k, int axis) {
    int lo[3] = {i, j, k}, hi[3] = {i, j, k};
    const int n = axis == 0 ? d.h : (axis == 1 ? d.w : d.d);
    lo[axis] = std::max(0, lo[axis] - 1);
    hi[axis] = std::min(n - 1, hi[axis] + 1);
    if (hi[axis] == lo[axis]) return 0.0;
    return (static_cast<double>(v.at(hi[0], hi[1], hi[2])) - v.at(lo[0], lo[1], lo[2])) / (hi[axis] - lo[axis]);
  };
  for (int i = 0; i < d.h; ++i)
    for (int j = 0; j < d.w; ++j)
      for (int k = 0; k < d.d; ++k) {
        const double gx = diff(i, j, k, 0), gy = diff(i, j, k, 1), gz = diff(i, j, k, 2);
        out.at(i, j, k) = static_cast<float>(std::sqrt(gx * gx + gy * gy + gz * gz));
      }
  return out;
}

namespace {

std::vector<double> masked_values(const Volume3D& v, const ForegroundMask& mask) {
  std::vector<double> out;
  out.reserve(mask.count());
  for (std::size_t n = 0; n < v.size(); ++n)
    if (mask.test(n)) out.push_back(v[n]);
  return out;
}

}  // namespace

BaselineObjective::BaselineObjective(std::vector<BaselinePair> pairs, const BaselineFitOptions& opt)
    : pairs_(std::move(pairs)), opt_(opt) {
  if (pairs_.empty()) throw DataError("fit_baseline: no pairs");
  for (std::size_t n = 0; n < pairs_.size(); ++n) {
    const BaselinePair& pr = pairs_[n];
    if (!pr.hf || !pr.lf || !pr.mask) throw DataError("fit_baseline: incomplete pair");
    if (pr.hf->dims() != pr.lf->dims() || pr.mask->dims != pr.hf->dims()) {
      throw DataError("fit_baseline: pair " + std::to_string(n) + " has mismatched dims");
    }
    if (pr.mask->count() == 0) throw DataError("fit_baseline: pair " + std::to_string(n) + " has an empty mask");
    Rng rng(derive_seed(opt_.seed, n));
    std::vector<float> z(pr.hf->size());
    for (float& v : z) v = static_cast<float>(rng.normal());
    noise_.push_back(std::move(z));
    target_intensity_.push_back(histogram_of(masked_values(*pr.lf, *pr.mask), opt_.bins));
    target_gradient_.push_back(histogram_of(masked_values(gradient_magnitude(*pr.lf), *pr.mask), opt_.bins));
  }
}

double BaselineObjective::operator()(const BaselineParams& p) const {
  if (!p.valid() || p.sigma_smooth > opt_.max_sigma_smooth) {
    // Finite, growing penalty keeps the simplex moving back into the feasible set.
    double violation = std::max(0.0, -p.sigma_smooth) + std::max(0.0, -p.sigma_noise) +
                       std::max(0.0, 1e-6 - p.scale) + std::max(0.0, p.sigma_smooth - opt_.max_sigma_smooth);
    if (!std::isfinite(violation)) violation = 1e6;
    return 1e3 + violation;
  }
  double total = 0.0;
  for (std::size_t n = 0; n < pairs_.size(); ++n) {
    const BaselinePair& pr = pairs_[n];
    const Volume3D sim = apply_baseline_with_noise(*pr.hf, p, noise_[n]);
    total += wasserstein1(histogram_of(masked_values(sim, *pr.mask), opt_.bins), target_intensity_[n]);
    if (opt_.grad_weight > 0.0) {
      total += opt_.grad_weight *
               wasserstein1(histogram_of(masked_values(gradient_magnitude(sim), *pr.mask), opt_.bins),
                            target_gradient_[n]);
    }
  }
  return total / static_cast<double>(pairs_.size());
}

namespace {

using Point = std::array<double, 4>;

struct Simplex {
  std::array<Point, 5> x;
  std::array<double, 5> f;
};

// Standard Nelder-Mead (reflection 1, expansion 2, contraction 0.5, shrink 0.5).
template <class F>
std::pair<Point, double> nelder_mead(F&& f, Point start, const Point& step, int max_iter, int* evals) {
  Simplex s;
  s.x[0] = start;
  for (int i = 0; i < 4; ++i) {
    s.x[i + 1] = start;
    s.x[i + 1][i] += step[i];
  }
  for (int i = 0; i < 5; ++i) {
    s.f[i] = f(s.x[i]);
    ++*evals;
  }
  for (int it = 0; it < max_iter; ++it) {
    std::array<int, 5> order{0, 1, 2, 3, 4};
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return s.f[a] < s.f[b]; });
    Simplex sorted;
    for (int i = 0; i < 5; ++i) {
      sorted.x[i] = s.x[order[i]];
      sorted.f[i] = s.f[order[i]];
    }
    s = sorted;

    double size = 0.0;
    for (int i = 1; i < 5; ++i)
      for (int d = 0; d < 4; ++d) size = std::max(size, std::abs(s.x[i][d] - s.x[0][d]));
    if (s.f[4] - s.f[0] < 1e-10 && size < 1e-6) break;

    Point centroid{};
    for (int i = 0; i < 4; ++i)
      for (int d = 0; d < 4; ++d) centroid[d] += s.x[i][d] / 4.0;
    const auto along = [&](double t) {
      Point p;
      for (int d = 0; d < 4; ++d) p[d] = centroid[d] + t * (s.x[4][d] - centroid[d]);
      return p;
    };
    const auto eval = [&](const Point& p) {
      ++*evals;
      return f(p);
    };

    const Point xr = along(-1.0);
    const double fr = eval(xr);
    if (fr < s.f[0]) {
      const Point xe = along(-2.0);
      const double fe = eval(xe);
      if (fe < fr) {
        s.x[4] = xe;
        s.f[4] = fe;
      } else {
        s.x[4] = xr;
        s.f[4] = fr;
      }
      continue;
    }
    if (fr < s.f[3]) {
      s.x[4] = xr;
      s.f[4] = fr;
      continue;
    }
    const bool outside = fr < s.f[4];
    const Point xc = along(outside ? -0.5 : 0.5);
    const double fc = eval(xc);
    if (fc < (outside ? fr : s.f[4])) {
      s.x[4] = xc;
      s.f[4] = fc;
      continue;
    }
    for (int i = 1; i < 5; ++i) {
      for (int d = 0; d < 4; ++d) s.x[i][d] = s.x[0][d] + 0.5 * (s.x[i][d] - s.x[0][d]);
      s.f[i] = eval(s.x[i]);
    }
  }
  const int best = static_cast<int>(std::min_element(s.f.begin(), s.f.end()) - s.f.begin());
  return {s.x[best], s.f[best]};
}

}  // namespace

BaselineFit fit_baseline(const std::vector<BaselinePair>& pairs, const BaselineFitOptions& opt) {
  const BaselineObjective objective(pairs, opt);
  BaselineFit fit;
  const auto f = [&](const Point& x) { return objective(BaselineParams::from_array(x)); };

  Point best{};
  double best_f = std::numeric_limits<double>::infinity();
  for (double ss : {0.0, 0.5, 1.0, 1.5, 2.5})
    for (double sn : {0.0, 0.02, 0.05, 0.1})
      for (double a : {0.5, 0.75, 1.0, 1.25})
        for (double c : {-0.1, 0.0, 0.1, 0.2}) {
          const Point x{ss, sn, a, c};
          const double v = f(x);
          ++fit.evaluations;
          if (v < best_f) {
            best_f = v;
            best = x;
          }
        }

  Point step{0.3, 0.02, 0.1, 0.05};
  for (int round = 0; round < 3; ++round) {
    auto [x, v] = nelder_mead(f, best, step, opt.max_iterations, &fit.evaluations);
    const bool improved = v < best_f - 1e-12;
    if (v <= best_f) {
      best = x;
      best_f = v;
    }
    if (!improved && round > 0) break;
    for (double& s : step) s *= 0.5;
  }
  fit.params = BaselineParams::from_array(best);
  fit.objective_value = best_f;
  return fit;
}

std::vector<std::pair<double, double>> monotonicity_witness(const BaselineParams& p, int samples) {
  p.validate();
  if (samples < 2) throw DataError("monotonicity_witness needs at least two samples");
  std::vector<std::pair<double, double>> out;
  out.reserve(samples);
  for (int n = 0; n < samples; ++n) {
    const double u = static_cast<double>(n) / (samples - 1);
    out.emplace_back(u, std::clamp(p.scale * u + p.offset, 0.0, 1.0));
  }
  return out;
}

nlohmann::ordered_json to_json(const BaselineFit& fit) {
  nlohmann::ordered_json j;
  j["sigma_smooth"] = fit.params.sigma_smooth;
  j["sigma_noise"] = fit.params.sigma_noise;
  j["scale"] = fit.params.scale;
  j["offset"] = fit.params.offset;
  j["objective_value"] = fit.objective_value;
  return j;
}

BaselineParams baseline_params_from_json(const nlohmann::json& j) {
  try {
    BaselineParams p{j.at("sigma_smooth").get<double>(), j.at("sigma_noise").get<double>(),
                     j.at("scale").get<double>(), j.at("offset").get<double>()};
    p.validate();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed baseline parameters: ") + e.what());
  }
}

}  // namespace h2lo
