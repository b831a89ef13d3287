#include "h2lo/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "h2lo/error.hpp"

namespace h2lo {

namespace {

void require_same_dims(const Volume3D& a, const Volume3D& b, const char* what) {
  if (a.dims() != b.dims()) {
    throw DataError(std::string(what) + ": dims differ (" + to_string(a.dims()) + " vs " + to_string(b.dims()) + ")");
  }
}

void require_same_bins(const Histogram& p, const Histogram& q) {
  if (p.bins != q.bins || p.p.size() != q.p.size()) throw DataError("histograms use different binning");
}

// Separable Gaussian smoothing with the window truncated at the border and
// renormalized along each axis.
std::vector<double> window_mean(const std::vector<double>& f, Dims d, const std::vector<double>& taps) {
  const int radius = static_cast<int>(taps.size() / 2);
  std::vector<double> cur = f, next(f.size());
  const int extent[3] = {d.h, d.w, d.d};
  const std::size_t stride[3] = {static_cast<std::size_t>(d.w) * d.d, static_cast<std::size_t>(d.d), 1};
  for (int axis = 0; axis < 3; ++axis) {
    const int n = extent[axis];
    const std::size_t st = stride[axis];
    for (int i = 0; i < d.h; ++i)
      for (int j = 0; j < d.w; ++j)
        for (int k = 0; k < d.d; ++k) {
          const int pos[3] = {i, j, k};
          const std::size_t at = d.index(i, j, k);
          const std::size_t base = at - pos[axis] * st;
          double acc = 0.0, wsum = 0.0;
          const int lo = std::max(0, pos[axis] - radius), hi = std::min(n - 1, pos[axis] + radius);
          for (int p = lo; p <= hi; ++p) {
            const double w = taps[p - pos[axis] + radius];
            acc += w * cur[base + p * st];
            wsum += w;
          }
          next[at] = acc / wsum;
        }
    std::swap(cur, next);
  }
  return cur;
}

double pearson(const double* x, const double* y, std::size_t n, bool* degenerate) {
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = x[i] - mx, b = y[i] - my;
    sxy += a * b;
    sxx += a * a;
    syy += b * b;
  }
  if (sxx <= 0.0 || syy <= 0.0) {
    *degenerate = true;
    return 0.0;
  }
  *degenerate = false;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

double psnr(const Volume3D& pred, const Volume3D& ref, double data_range) {
  require_same_dims(pred, ref, "psnr");
  double se = 0.0;
  for (std::size_t n = 0; n < pred.size(); ++n) {
    const double e = static_cast<double>(pred[n]) - static_cast<double>(ref[n]);
    se += e * e;
  }
  const double mse = se / static_cast<double>(pred.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(data_range * data_range / mse);
}

double ssim3d(const Volume3D& pred, const Volume3D& ref, double data_range) {
  require_same_dims(pred, ref, "ssim3d");
  if (pred == ref) return 1.0;
  constexpr double sigma = 1.5;
  constexpr int radius = 5;
  std::vector<double> taps(2 * radius + 1);
  for (int t = -radius; t <= radius; ++t) taps[t + radius] = std::exp(-0.5 * t * t / (sigma * sigma));

  const Dims d = pred.dims();
  const std::size_t n = pred.size();
  std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = pred[i];
    y[i] = ref[i];
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = window_mean(x, d, taps), my = window_mean(y, d, taps);
  const auto exx = window_mean(xx, d, taps), eyy = window_mean(yy, d, taps), exy = window_mean(xy, d, taps);

  const double c1 = (0.01 * data_range) * (0.01 * data_range);
  const double c2 = (0.03 * data_range) * (0.03 * data_range);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double sx = exx[i] - mx[i] * mx[i];
    const double sy = eyy[i] - my[i] * my[i];
    const double sxy = exy[i] - mx[i] * my[i];
    const double num = (2.0 * mx[i] * my[i] + c1) * (2.0 * sxy + c2);
    const double den = (mx[i] * mx[i] + my[i] * my[i] + c1) * (sx + sy + c2);
    total += num / den;
  }
  return total / static_cast<double>(n);
}

double ncc(const Volume3D& pred, const Volume3D& ref) {
  require_same_dims(pred, ref, "ncc");
  const std::vector<double> x(pred.data().begin(), pred.data().end());
  const std::vector<double> y(ref.data().begin(), ref.data().end());
  bool degenerate = false;
  const double r = pearson(x.data(), y.data(), x.size(), &degenerate);
  if (degenerate) throw DataError("ncc: constant volume has no correlation");
  return r;
}

Histogram histogram_of(const std::vector<double>& values, int bins, double lo, double hi) {
  if (bins < 1) throw DataError("histogram needs at least one bin");
  if (values.empty()) throw DataError("histogram of an empty set");
  if (!(hi > lo)) throw DataError("histogram range must be non-empty");
  Histogram h{bins, std::vector<double>(bins, 0.0), values.size()};
  std::vector<std::size_t> counts(bins, 0);
  for (double v : values) {
    const double t = (v - lo) / (hi - lo) * bins;
    const int b = t <= 0.0 ? 0 : static_cast<int>(std::min<double>(std::floor(t), bins - 1));
    ++counts[b];
  }
  for (int b = 0; b < bins; ++b) h.p[b] = static_cast<double>(counts[b]) / static_cast<double>(values.size());
  return h;
}

Histogram foreground_histogram(const Volume3D& v, const ForegroundMask& mask, int bins) {
  if (mask.dims != v.dims()) throw DataError("foreground_histogram: mask dims differ from volume");
  std::vector<double> values;
  values.reserve(mask.count());
  for (std::size_t n = 0; n < v.size(); ++n)
    if (mask.test(n)) values.push_back(v[n]);
  if (values.empty()) throw DataError("foreground_histogram: empty mask");
  return histogram_of(values, bins);
}

double wasserstein1(const Histogram& p, const Histogram& q) {
  require_same_bins(p, q);
  double cp = 0.0, cq = 0.0, total = 0.0;
  for (int b = 0; b < p.bins; ++b) {
    cp += p.p[b];
    cq += q.p[b];
    total += std::abs(cp - cq);
  }
  return total / p.bins;
}

double hncc(const Histogram& p, const Histogram& q) {
  require_same_bins(p, q);
  bool degenerate = false;
  const double r = pearson(p.p.data(), q.p.data(), p.p.size(), &degenerate);
  if (degenerate) return p.p == q.p ? 1.0 : 0.0;
  return r;
}

double bhattacharyya(const Histogram& p, const Histogram& q) {
  require_same_bins(p, q);
  if (p.p == q.p) return 0.0;
  double bc = 0.0;
  for (int b = 0; b < p.bins; ++b) bc += std::sqrt(p.p[b] * q.p[b]);
  if (bc <= 0.0) return kBhattacharyyaCap;
  return std::clamp(-std::log(bc), 0.0, kBhattacharyyaCap);
}

double js_divergence(const Histogram& p, const Histogram& q) {
  require_same_bins(p, q);
  double js = 0.0;
  for (int b = 0; b < p.bins; ++b) {
    const double m = 0.5 * (p.p[b] + q.p[b]);
    const double tp = p.p[b] > 0.0 ? p.p[b] * std::log2(p.p[b] / m) : 0.0;
    const double tq = q.p[b] > 0.0 ? q.p[b] * std::log2(q.p[b] / m) : 0.0;
    // min/max order keeps js(p, q) == js(q, p) bitwise
    js += 0.5 * (std::min(tp, tq) + std::max(tp, tq));
  }
  return std::clamp(js, 0.0, 1.0);
}

MetricsReport evaluate_pair(const Volume3D& pred, const Volume3D& ref_lf, const Volume3D& hf_for_mask,
                            const EvalOptions& opt) {
  require_same_dims(pred, ref_lf, "evaluate_pair");
  require_same_dims(pred, hf_for_mask, "evaluate_pair");
  MetricsReport r;
  r.psnr = psnr(pred, ref_lf);
  r.ssim_pct = 100.0 * ssim3d(pred, ref_lf);
  r.ncc = ncc(pred, ref_lf);
  const ForegroundMask mask = foreground_mask(hf_for_mask, opt.threshold);
  const Histogram hp = foreground_histogram(pred, mask, opt.bins);
  const Histogram hr = foreground_histogram(ref_lf, mask, opt.bins);
  r.wass = wasserstein1(hp, hr);
  r.hncc = hncc(hp, hr);
  r.bhat = bhattacharyya(hp, hr);
  r.js = js_divergence(hp, hr);
  return r;
}

namespace {

double capped_psnr(double v) { return std::min(v, kPsnrCap); }

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::array<double MetricsReport::*, 7> kFields = {&MetricsReport::psnr, &MetricsReport::ssim_pct,
                                                  &MetricsReport::ncc,  &MetricsReport::wass,
                                                  &MetricsReport::hncc, &MetricsReport::bhat,
                                                  &MetricsReport::js};

}  // namespace

std::string metrics_csv_header() { return "pred,ref,psnr,ssim,ncc,wass,hncc,bhat,js"; }

std::string to_csv_row(const MetricsReport& r) {
  std::string s = r.pred_id + "," + r.ref_id;
  for (auto f : kFields) s += "," + fmt(f == &MetricsReport::psnr ? capped_psnr(r.*f) : r.*f);
  return s;
}

nlohmann::ordered_json to_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["pred"] = r.pred_id;
  j["ref"] = r.ref_id;
  j["psnr"] = capped_psnr(r.psnr);
  j["ssim"] = r.ssim_pct;
  j["ncc"] = r.ncc;
  j["wass"] = r.wass;
  j["hncc"] = r.hncc;
  j["bhat"] = r.bhat;
  j["js"] = r.js;
  return j;
}

MetricsSummary summarize(const std::vector<MetricsReport>& rows) {
  if (rows.empty()) throw DataError("summarize: no rows");
  MetricsSummary s;
  s.n = rows.size();
  for (auto f : kFields) {
    double mean = 0.0;
    for (const auto& r : rows) mean += f == &MetricsReport::psnr ? capped_psnr(r.*f) : r.*f;
    mean /= static_cast<double>(rows.size());
    double var = 0.0;
    for (const auto& r : rows) {
      const double v = (f == &MetricsReport::psnr ? capped_psnr(r.*f) : r.*f) - mean;
      var += v * v;
    }
    s.mean.*f = mean;
    s.stddev.*f = rows.size() > 1 ? std::sqrt(var / static_cast<double>(rows.size() - 1)) : 0.0;
  }
  return s;
}

std::string to_csv_summary_row(const MetricsSummary& s, const std::string& label) {
  std::string row = label + ",mean±std";
  for (auto f : kFields) row += "," + fmt(s.mean.*f) + "±" + fmt(s.stddev.*f);
  return row;
}

}  // namespace h2lo
