#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "h2lo/volume.hpp"

namespace h2lo {

/// Serialized stand-ins for infinite scores.
inline constexpr double kPsnrCap = 100.0;
inline constexpr double kBhattacharyyaCap = 50.0;

/// 10 log10(range^2 / MSE); +infinity when MSE is zero.
double psnr(const Volume3D& pred, const Volume3D& ref, double data_range = 1.0);

/// Mean local SSIM with an isotropic Gaussian window (sigma 1.5, 11^3 support,
/// K1 = 0.01, K2 = 0.03). Near the border the window is truncated to the
/// volume and renormalized, so any volume size is accepted.
double ssim3d(const Volume3D& pred, const Volume3D& ref, double data_range = 1.0);

/// Pearson correlation over all voxels. Throws DataError for constant inputs.
double ncc(const Volume3D& pred, const Volume3D& ref);

struct Histogram {
  int bins = 256;
  std::vector<double> p;
  std::size_t count = 0;
};

/// Equal-width bins on [0, 1]; 1.0 falls in the last bin and values outside
/// the range are clamped to the end bins.
Histogram foreground_histogram(const Volume3D& v, const ForegroundMask& mask, int bins = 256);
Histogram histogram_of(const std::vector<double>& values, int bins = 256, double lo = 0.0, double hi = 1.0);

double wasserstein1(const Histogram& p, const Histogram& q);
double hncc(const Histogram& p, const Histogram& q);
/// -ln sum sqrt(p q), capped at kBhattacharyyaCap (disjoint supports).
double bhattacharyya(const Histogram& p, const Histogram& q);
/// Base-2 Jensen-Shannon divergence, in [0, 1].
double js_divergence(const Histogram& p, const Histogram& q);

struct MetricsReport {
  std::string pred_id;
  std::string ref_id;
  double psnr = 0.0;
  double ssim_pct = 0.0;
  double ncc = 0.0;
  double wass = 0.0;
  double hncc = 0.0;
  double bhat = 0.0;
  double js = 0.0;
};

struct EvalOptions {
  int bins = 256;
  double threshold = 0.01;
};

/// All seven metrics; histogram metrics use foreground_mask(hf_for_mask).
MetricsReport evaluate_pair(const Volume3D& pred, const Volume3D& ref_lf, const Volume3D& hf_for_mask,
                            const EvalOptions& opt = {});

/// Fixed column order: psnr, ssim, ncc, wass, hncc, bhat, js.
std::string metrics_csv_header();
std::string to_csv_row(const MetricsReport& r);
nlohmann::ordered_json to_json(const MetricsReport& r);

struct MetricsSummary {
  MetricsReport mean;
  MetricsReport stddev;
  std::size_t n = 0;
};
/// Mean and sample standard deviation of each metric (PSNR capped first).
MetricsSummary summarize(const std::vector<MetricsReport>& rows);
/// "mean±std" cells in the fixed column order.
std::string to_csv_summary_row(const MetricsSummary& s, const std::string& label);

}  // namespace h2lo
