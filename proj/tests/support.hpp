#pragma once

// Brute-force reference implementations used as test oracles. They share no
// code with the library and trade speed for directness.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "h2lo/model.hpp"
#include "h2lo/rng.hpp"
#include "h2lo/volume.hpp"

namespace oracle {

using h2lo::Dims;
using h2lo::Volume3D;

inline Volume3D random_volume(Dims d, h2lo::Rng& rng, double lo = 0.0, double hi = 1.0) {
  Volume3D v(d);
  for (float& x : v.data()) x = static_cast<float>(rng.uniform(lo, hi));
  return v;
}

inline h2lo::ModelConfig tiny_config() {
  h2lo::ModelConfig c;
  c.branch_channels = {2, 2, 4, 4, 8};
  c.trunk_width = 16;
  c.trunk_hidden_layers = 2;
  return c;
}

// k_d(r) = -(r_d / s^2) (2 pi s^2)^(-3/2) exp(-|r|^2 / (2 s^2)), in long double.
inline long double derivative_kernel(int axis, int a, int b, int c, long double s) {
  const long double r[3] = {static_cast<long double>(a), static_cast<long double>(b), static_cast<long double>(c)};
  const long double r2 = r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
  const long double norm = powl(2.0L * std::numbers::pi_v<long double> * s * s, -1.5L);
  return -(r[axis] / (s * s)) * norm * expl(-r2 / (2.0L * s * s));
}

// Direct 7-loop same-padding cross-correlation. x [cin][H][W][D], w [cout][cin][k][k][k].
inline std::vector<double> conv3d(const std::vector<double>& x, int cin, Dims d, const std::vector<double>& w,
                                  const std::vector<double>& bias, int cout, int k) {
  const int r = k / 2;
  std::vector<double> y(static_cast<std::size_t>(cout) * d.count());
  for (int o = 0; o < cout; ++o)
    for (int i = 0; i < d.h; ++i)
      for (int j = 0; j < d.w; ++j)
        for (int l = 0; l < d.d; ++l) {
          double acc = bias[o];
          for (int ci = 0; ci < cin; ++ci)
            for (int a = 0; a < k; ++a)
              for (int b = 0; b < k; ++b)
                for (int c = 0; c < k; ++c) {
                  const int ii = i + a - r, jj = j + b - r, ll = l + c - r;
                  if (!d.contains(ii, jj, ll)) continue;
                  acc += w[(((static_cast<std::size_t>(o) * cin + ci) * k + a) * k + b) * k + c] *
                         x[ci * d.count() + d.index(ii, jj, ll)];
                }
          y[o * d.count() + d.index(i, j, l)] = acc;
        }
  return y;
}

inline double psnr(const Volume3D& p, const Volume3D& r) {
  long double se = 0;
  for (std::size_t n = 0; n < p.size(); ++n) {
    const long double e = static_cast<long double>(p[n]) - r[n];
    se += e * e;
  }
  const long double mse = se / p.size();
  if (mse == 0) return INFINITY;
  return static_cast<double>(-10.0L * log10l(mse));
}

// Explicit 3D window per voxel; the truncated window is renormalized by the
// sum of its weights and moments are taken about the local mean.
inline double ssim(const Volume3D& p, const Volume3D& q) {
  const Dims d = p.dims();
  const int rad = 5;
  const long double c1 = 1e-4L, c2 = 9e-4L;
  long double total = 0;
  for (int i = 0; i < d.h; ++i)
    for (int j = 0; j < d.w; ++j)
      for (int l = 0; l < d.d; ++l) {
        long double ws = 0, mx = 0, my = 0;
        for (int a = -rad; a <= rad; ++a)
          for (int b = -rad; b <= rad; ++b)
            for (int c = -rad; c <= rad; ++c) {
              if (!d.contains(i + a, j + b, l + c)) continue;
              const long double w = expl(-(a * a + b * b + c * c) / (2.0L * 1.5L * 1.5L));
              ws += w;
              mx += w * p.at(i + a, j + b, l + c);
              my += w * q.at(i + a, j + b, l + c);
            }
        mx /= ws;
        my /= ws;
        long double sx = 0, sy = 0, sxy = 0;
        for (int a = -rad; a <= rad; ++a)
          for (int b = -rad; b <= rad; ++b)
            for (int c = -rad; c <= rad; ++c) {
              if (!d.contains(i + a, j + b, l + c)) continue;
              const long double w = expl(-(a * a + b * b + c * c) / (2.0L * 1.5L * 1.5L)) / ws;
              const long double ex = p.at(i + a, j + b, l + c) - mx, ey = q.at(i + a, j + b, l + c) - my;
              sx += w * ex * ex;
              sy += w * ey * ey;
              sxy += w * ex * ey;
            }
        total += ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sx + sy + c2));
      }
  return static_cast<double>(total / d.count());
}

inline double pearson(const std::vector<long double>& x, const std::vector<long double>& y) {
  long double mx = 0, my = 0;
  for (std::size_t n = 0; n < x.size(); ++n) {
    mx += x[n];
    my += y[n];
  }
  mx /= x.size();
  my /= y.size();
  long double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t n = 0; n < x.size(); ++n) {
    sxy += (x[n] - mx) * (y[n] - my);
    sxx += (x[n] - mx) * (x[n] - mx);
    syy += (y[n] - my) * (y[n] - my);
  }
  return static_cast<double>(sxy / sqrtl(sxx * syy));
}

inline double ncc(const Volume3D& p, const Volume3D& q) {
  std::vector<long double> x(p.data().begin(), p.data().end()), y(q.data().begin(), q.data().end());
  return pearson(x, y);
}

// Counts by scanning bins; 1.0 lands in the last bin.
inline std::vector<double> histogram(const Volume3D& v, const Volume3D& hf, double thr, int bins) {
  std::vector<double> values;
  for (std::size_t n = 0; n < v.size(); ++n)
    if (hf[n] > thr) values.push_back(v[n]);
  std::vector<double> h(bins, 0.0);
  for (double x : values) {
    for (int b = 0; b < bins; ++b) {
      const double lo = static_cast<double>(b) / bins, hi = static_cast<double>(b + 1) / bins;
      if ((x >= lo && x < hi) || (b == bins - 1 && x >= lo) || (b == 0 && x < lo)) {
        h[b] += 1.0;
        break;
      }
    }
  }
  for (double& x : h) x /= static_cast<double>(values.size());
  return h;
}

// Quantile-function form: integrate |Fp^-1(t) - Fq^-1(t)| over t with atoms at bin centers.
inline double wasserstein(const std::vector<double>& p, const std::vector<double>& q) {
  const int bins = static_cast<int>(p.size());
  std::size_t a = 0, b = 0;
  long double ra = p[0], rb = q[0], total = 0;
  while (true) {
    while (a < p.size() && ra <= 0) {
      if (++a < p.size()) ra = p[a];
    }
    while (b < q.size() && rb <= 0) {
      if (++b < q.size()) rb = q[b];
    }
    if (a >= p.size() || b >= q.size()) break;
    const long double m = std::min(ra, rb);
    total += m * std::abs(static_cast<long double>(a) - static_cast<long double>(b)) / bins;
    ra -= m;
    rb -= m;
    if (ra <= 1e-18L) ra = 0;
    if (rb <= 1e-18L) rb = 0;
  }
  return static_cast<double>(total);
}

inline double hncc(const std::vector<double>& p, const std::vector<double>& q) {
  return pearson(std::vector<long double>(p.begin(), p.end()), std::vector<long double>(q.begin(), q.end()));
}

inline double bhattacharyya(const std::vector<double>& p, const std::vector<double>& q) {
  long double bc = 0;
  for (std::size_t n = 0; n < p.size(); ++n) bc += sqrtl(static_cast<long double>(p[n]) * q[n]);
  return static_cast<double>(-logl(bc));
}

// Entropy form: H(M) - (H(P) + H(Q)) / 2, base 2.
inline double js(const std::vector<double>& p, const std::vector<double>& q) {
  const auto H = [](const std::vector<long double>& v) {
    long double h = 0;
    for (long double x : v)
      if (x > 0) h -= x * log2l(x);
    return h;
  };
  std::vector<long double> P(p.begin(), p.end()), Q(q.begin(), q.end()), M(p.size());
  for (std::size_t n = 0; n < p.size(); ++n) M[n] = 0.5L * (P[n] + Q[n]);
  return static_cast<double>(H(M) - 0.5L * (H(P) + H(Q)));
}

inline double rel_err(double a, double b) {
  if (a == b) return 0.0;
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

}  // namespace oracle
