#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "json.hpp"
#include "h2lo/metrics.hpp"
#include "h2lo/rng.hpp"
#include "h2lo/volume.hpp"

namespace h2lo {

/// Four-parameter LF simulator: clamp(a * blur(hf) + c + noise, 0, 1).
struct BaselineParams {
  double sigma_smooth = 0.0;
  double sigma_noise = 0.0;
  double scale = 1.0;
  double offset = 0.0;

  std::array<double, 4> as_array() const { return {sigma_smooth, sigma_noise, scale, offset}; }
  static BaselineParams from_array(const std::array<double, 4>& v) { return {v[0], v[1], v[2], v[3]}; }
  bool valid() const;
  void validate() const;
};

/// Noise is drawn from `rng` in flat voxel order. A null rng is accepted only
/// when sigma_noise == 0.
Volume3D apply_baseline(const Volume3D& hf, const BaselineParams& p, Rng* rng = nullptr);

/// Same channel with a caller-supplied unit-variance noise field.
Volume3D apply_baseline_with_noise(const Volume3D& hf, const BaselineParams& p, std::span<const float> unit_noise);

struct BaselinePair {
  const Volume3D* hf = nullptr;
  const Volume3D* lf = nullptr;
  const ForegroundMask* mask = nullptr;
};

struct BaselineFitOptions {
  std::uint64_t seed = 1234;
  int bins = 256;
  double grad_weight = 1.0;
  int max_iterations = 600;
  double max_sigma_smooth = 4.0;
};

struct BaselineFit {
  BaselineParams params;
  double objective_value = 0.0;
  int evaluations = 0;
};

/// Fixed-noise histogram objective used by the fit; exposed for tests.
class BaselineObjective {
public:
  BaselineObjective(std::vector<BaselinePair> pairs, const BaselineFitOptions& opt);
  double operator()(const BaselineParams& p) const;

private:
  std::vector<BaselinePair> pairs_;
  BaselineFitOptions opt_;
  std::vector<std::vector<float>> noise_;
  std::vector<Histogram> target_intensity_;
  std::vector<Histogram> target_gradient_;
};

BaselineFit fit_baseline(const std::vector<BaselinePair>& pairs, const BaselineFitOptions& opt = {});

/// Samples of the noiseless response u -> clamp(a u + c, 0, 1) on an ascending grid over [0, 1].
std::vector<std::pair<double, double>> monotonicity_witness(const BaselineParams& p, int samples = 101);

/// Central-difference gradient magnitude at every voxel (one-sided at the border).
Volume3D gradient_magnitude(const Volume3D& v);

nlohmann::ordered_json to_json(const BaselineFit& fit);
BaselineParams baseline_params_from_json(const nlohmann::json& j);

}  // namespace h2lo
