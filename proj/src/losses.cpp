#include "h2lo/losses.hpp"

#include <cmath>
#include <numbers>

#include "eigen_maps.hpp"

namespace h2lo {

std::vector<double> make_derivative_kernel(Axis axis, double sigma, int size) {
  if (!(sigma > 0.0)) throw DataError("derivative kernel: sigma must be positive");
  if (size < 1 || size % 2 == 0) throw DataError("derivative kernel: size must be odd");
  const int h = size / 2;
  const double s2 = sigma * sigma;
  const double norm = std::pow(2.0 * std::numbers::pi * s2, -1.5);
  const int ax = static_cast<int>(axis);
  std::vector<double> k(static_cast<std::size_t>(size) * size * size);
  std::size_t n = 0;
  for (int a = -h; a <= h; ++a)
    for (int b = -h; b <= h; ++b)
      for (int c = -h; c <= h; ++c, ++n) {
        const int r[3] = {a, b, c};
        const double rr = static_cast<double>(a * a + b * b + c * c);
        k[n] = -(r[ax] / s2) * norm * std::exp(-rr / (2.0 * s2));
      }
  return k;
}

GaussianDerivativeKernels make_derivative_kernels(double sigma, int size) {
  GaussianDerivativeKernels g;
  g.sigma = sigma;
  g.size = size;
  for (Axis a : {Axis::X, Axis::Y, Axis::Z}) g.k[static_cast<int>(a)] = make_derivative_kernel(a, sigma, size);
  return g;
}

void LossWeights::validate(Dims volume) const {
  if (n_coords < 1) throw DataError("n_coords must be >= 1");
  if (b_subvols < 1) throw DataError("b_subvols must be >= 1");
  if (lambda_grad < 0.0) throw DataError("lambda_grad must be >= 0");
  if (subvol_size < 1 || subvol_size > volume.h || subvol_size > volume.w || subvol_size > volume.d) {
    throw DataError("sub-volume size " + std::to_string(subvol_size) + " does not fit volume " + to_string(volume));
  }
}

std::vector<Voxel> sample_coords(Dims dims, int n, Rng& rng) {
  if (n < 1) throw DataError("sample_coords: N must be >= 1");
  std::vector<Voxel> out(n);
  const std::size_t wd = static_cast<std::size_t>(dims.w) * dims.d;
  for (auto& v : out) {
    const std::size_t flat = rng.below(dims.count());
    v = {static_cast<int>(flat / wd), static_cast<int>((flat / dims.d) % dims.w), static_cast<int>(flat % dims.d)};
  }
  return out;
}

Voxel sample_subvolume_origin(Dims dims, int size, Rng& rng) {
  if (size > dims.h || size > dims.w || size > dims.d) throw DataError("sub-volume larger than volume");
  return {static_cast<int>(rng.below(dims.h - size + 1)), static_cast<int>(rng.below(dims.w - size + 1)),
          static_cast<int>(rng.below(dims.d - size + 1))};
}

LossSample draw_loss_sample(Dims dims, const LossWeights& w, Rng& rng) {
  w.validate(dims);
  LossSample s;
  s.coords = sample_coords(dims, w.n_coords, rng);
  s.subvol_size = w.subvol_size;
  for (int b = 0; b < w.b_subvols; ++b) s.subvol_origins.push_back(sample_subvolume_origin(dims, w.subvol_size, rng));
  return s;
}

double l1_loss(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) throw DataError("l1_loss: length mismatch");
  if (pred.empty()) throw DataError("l1_loss: empty input");
  double s = 0.0;
  for (std::size_t n = 0; n < pred.size(); ++n) s += std::abs(pred[n] - target[n]);
  return s / static_cast<double>(pred.size());
}

double grad_loss_residual(std::span<const double> e, Dims dims, const GaussianDerivativeKernels& kernels,
                          std::span<double> de) {
  const int K = kernels.size;
  if (dims.h < K || dims.w < K || dims.d < K) {
    throw DataError("grad_loss: sub-volume " + to_string(dims) + " smaller than the " + std::to_string(K) + "^3 kernel");
  }
  if (e.size() != dims.count()) throw DataError("grad_loss: residual length mismatch");
  const bool want_grad = !de.empty();
  if (want_grad) {
    if (de.size() != e.size()) throw DataError("grad_loss: gradient buffer length mismatch");
    std::fill(de.begin(), de.end(), 0.0);
  }
  const Dims out{dims.h - K + 1, dims.w - K + 1, dims.d - K + 1};
  const std::size_t taps = static_cast<std::size_t>(K) * K * K;
  const std::size_t half = taps / 2;

  // Taps t and taps-1-t are mirror offsets; with k(-r) = -k(r) each pair is w * (e[+] - e[-]).
  std::vector<std::ptrdiff_t> off(taps);
  for (int a = 0, t = 0; a < K; ++a)
    for (int b = 0; b < K; ++b)
      for (int c = 0; c < K; ++c, ++t) off[t] = static_cast<std::ptrdiff_t>((a * dims.w + b) * dims.d + c);

  double total = 0.0;
  for (const auto& k : kernels.k) {
    if (k.size() != taps) throw DataError("grad_loss: kernel has the wrong number of taps");
    for (std::size_t t = 0; t <= half; ++t) {
      if (k[t] != -k[taps - 1 - t]) throw DataError("grad_loss: kernel is not point-antisymmetric");
    }
    // Convolution flips the kernel: weight of tap t is k[taps-1-t] = -k[t].
    std::vector<double> w(half);
    for (std::size_t t = 0; t < half; ++t) w[t] = -k[t];
    for (int i = 0; i < out.h; ++i)
      for (int j = 0; j < out.w; ++j)
        for (int l = 0; l < out.d; ++l) {
          const std::size_t o = dims.index(i, j, l);
          const double* eo = &e[o];
          double v = 0.0;
          for (std::size_t t = 0; t < half; ++t) v += w[t] * (eo[off[t]] - eo[off[taps - 1 - t]]);
          total += v * v;
          if (want_grad) {
            const double g = 2.0 * v;
            double* dd = &de[o];
            for (std::size_t t = 0; t < half; ++t) {
              dd[off[t]] += g * w[t];
              dd[off[taps - 1 - t]] -= g * w[t];
            }
          }
        }
  }
  return total;
}

double grad_loss(const Volume3D& pred_sub, const Volume3D& gt_sub, const GaussianDerivativeKernels& kernels) {
  if (pred_sub.dims() != gt_sub.dims()) throw DataError("grad_loss: dims differ");
  std::vector<double> e(pred_sub.size());
  for (std::size_t n = 0; n < e.size(); ++n) e[n] = static_cast<double>(pred_sub[n]) - static_cast<double>(gt_sub[n]);
  return grad_loss_residual(e, pred_sub.dims(), kernels);
}

template <typename T>
LossTerms total_loss(H2LOModel<T>& model, const Volume3D& hf, const Volume3D& lf, const LossWeights& weights,
                     const LossSample& sample, const GaussianDerivativeKernels& kernels, bool accumulate_grad) {
  const Dims dims = hf.dims();
  if (lf.dims() != dims) throw DataError("total_loss: HF and LF dims differ");
  if (sample.coords.empty()) throw DataError("total_loss: no sampled coordinates");
  const bool use_grad_term = weights.lambda_grad > 0.0 && !sample.subvol_origins.empty();

  std::vector<Voxel> voxels = sample.coords;
  const std::size_t n_l1 = voxels.size();
  const int s = sample.subvol_size;
  const Dims sub{s, s, s};
  if (use_grad_term) {
    for (const Voxel& o : sample.subvol_origins) {
      if (!dims.contains(o.i + s - 1, o.j + s - 1, o.k + s - 1) || !dims.contains(o.i, o.j, o.k)) {
        throw DataError("total_loss: sub-volume outside the volume");
      }
      for (int i = 0; i < s; ++i)
        for (int j = 0; j < s; ++j)
          for (int k = 0; k < s; ++k) voxels.push_back({o.i + i, o.j + j, o.k + k});
    }
  }

  BranchCache<T> bcache;
  TrunkCache<T> tcache;
  const FeatureField<T> field = branch_forward(model, hf, accumulate_grad ? &bcache : nullptr);
  const CoordGrid grid(dims);
  const Tensor<T> coeffs = gather_coefficients(field, voxels);
  const Tensor<T> basis = trunk_forward(model, voxel_coords<T>(grid, voxels), accumulate_grad ? &tcache : nullptr);
  const std::vector<T> pred = combine(coeffs, basis, model.beta.values[0]);

  std::vector<double> dpred(voxels.size(), 0.0);
  LossTerms terms;
  for (std::size_t n = 0; n < n_l1; ++n) {
    const Voxel& v = voxels[n];
    const double diff = static_cast<double>(pred[n]) - static_cast<double>(lf.at(v.i, v.j, v.k));
    terms.l1 += std::abs(diff);
    dpred[n] = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
  }
  terms.l1 /= static_cast<double>(n_l1);
  for (std::size_t n = 0; n < n_l1; ++n) dpred[n] /= static_cast<double>(n_l1);

  if (use_grad_term) {
    const std::size_t per = sub.count();
    const double scale = 1.0 / static_cast<double>(sample.subvol_origins.size());
    std::vector<double> e(per), de(per);
    for (std::size_t b = 0; b < sample.subvol_origins.size(); ++b) {
      const std::size_t base = n_l1 + b * per;
      for (std::size_t n = 0; n < per; ++n) {
        const Voxel& v = voxels[base + n];
        e[n] = static_cast<double>(pred[base + n]) - static_cast<double>(lf.at(v.i, v.j, v.k));
      }
      terms.grad += scale * grad_loss_residual(e, sub, kernels, accumulate_grad ? std::span<double>(de) : std::span<double>());
      if (accumulate_grad) {
        const double w = weights.lambda_grad * scale;
        for (std::size_t n = 0; n < per; ++n) dpred[base + n] += w * de[n];
      }
    }
  }
  terms.total = terms.l1 + weights.lambda_grad * terms.grad;
  if (!std::isfinite(terms.total)) throw NumericalError("total_loss: non-finite loss");

  if (accumulate_grad) {
    const int p = field.channels;
    const auto m = static_cast<int>(voxels.size());
    Tensor<T> dbasis({m, p});
    FeatureField<T> dfield(dims, p);
    double dbeta = 0.0;
    for (int n = 0; n < m; ++n) {
      const T g = static_cast<T>(dpred[n]);
      if (g == T(0)) continue;
      dbeta += dpred[n];
      const T* c = &coeffs.values[static_cast<std::size_t>(n) * p];
      const T* t = &basis.values[static_cast<std::size_t>(n) * p];
      T* dt = &dbasis.values[static_cast<std::size_t>(n) * p];
      const std::size_t at = dims.index(voxels[n].i, voxels[n].j, voxels[n].k);
      for (int k = 0; k < p; ++k) {
        dt[k] = g * c[k];
        dfield.data[k * dfield.stride() + at] += g * t[k];
      }
    }
    model.beta.ensure_grad();
    model.beta.grad[0] += static_cast<T>(dbeta);
    trunk_backward(model, tcache, dbasis);
    branch_backward(model, bcache, dfield);
  }
  return terms;
}

template <typename T>
LossTerms total_loss(H2LOModel<T>& model, const Volume3D& hf, const Volume3D& lf, const LossWeights& weights,
                     Rng& rng) {
  static const GaussianDerivativeKernels kernels = make_derivative_kernels(1.0, 5);
  const LossSample sample = draw_loss_sample(hf.dims(), weights, rng);
  return total_loss(model, hf, lf, weights, sample, kernels, true);
}

template LossTerms total_loss(H2LOModel<float>&, const Volume3D&, const Volume3D&, const LossWeights&,
                              const LossSample&, const GaussianDerivativeKernels&, bool);
template LossTerms total_loss(H2LOModel<double>&, const Volume3D&, const Volume3D&, const LossWeights&,
                              const LossSample&, const GaussianDerivativeKernels&, bool);
template LossTerms total_loss(H2LOModel<float>&, const Volume3D&, const Volume3D&, const LossWeights&, Rng&);
template LossTerms total_loss(H2LOModel<double>&, const Volume3D&, const Volume3D&, const LossWeights&, Rng&);

}  // namespace h2lo
