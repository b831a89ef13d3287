#pragma once

#include <array>
#include <span>
#include <vector>

#include "h2lo/model.hpp"
#include "h2lo/rng.hpp"
#include "h2lo/volume.hpp"

namespace h2lo {

enum class Axis { X = 0, Y = 1, Z = 2 };

/// Sampled first derivatives of an isotropic 3D Gaussian,
/// k_d(r) = -(r_d / sigma^2) G_sigma(r), at integer offsets -size/2..size/2.
/// Stored [a][b][c] with axis X along the first (H) index.
struct GaussianDerivativeKernels {
  double sigma = 1.0;
  int size = 5;
  std::array<std::vector<double>, 3> k;

  int radius() const { return size / 2; }
  double at(Axis axis, int a, int b, int c) const {
    return k[static_cast<int>(axis)][(static_cast<std::size_t>(a) * size + b) * size + c];
  }
};

std::vector<double> make_derivative_kernel(Axis axis, double sigma, int size);
GaussianDerivativeKernels make_derivative_kernels(double sigma = 1.0, int size = 5);

struct LossWeights {
  double lambda_grad = 1.0;
  int n_coords = 8000;
  int b_subvols = 1;
  int subvol_size = 32;

  void validate(Dims volume) const;
};

/// Random draws for one loss evaluation, fixed up front so the loss is a
/// deterministic function of the parameters.
struct LossSample {
  std::vector<Voxel> coords;
  std::vector<Voxel> subvol_origins;
  int subvol_size = 0;
};

/// N voxel indices, uniform over the full grid, with replacement.
std::vector<Voxel> sample_coords(Dims dims, int n, Rng& rng);
Voxel sample_subvolume_origin(Dims dims, int size, Rng& rng);
LossSample draw_loss_sample(Dims dims, const LossWeights& w, Rng& rng);

/// Mean absolute difference.
double l1_loss(std::span<const double> pred, std::span<const double> target);

/// Sum over axes of the squared Frobenius norm of (pred - gt) * k_d, taken
/// over the valid region (no padding).
double grad_loss(const Volume3D& pred_sub, const Volume3D& gt_sub, const GaussianDerivativeKernels& kernels);

/// grad_loss on a residual field (pred - gt). When `d_residual` is non-empty
/// it is overwritten with dLoss/dResidual.
double grad_loss_residual(std::span<const double> residual, Dims dims, const GaussianDerivativeKernels& kernels,
                          std::span<double> d_residual = {});

struct LossTerms {
  double total = 0.0;
  double l1 = 0.0;
  double grad = 0.0;  // mean over sub-volumes, before lambda
};

/// L1 over sampled voxels + lambda_grad * mean sub-volume grad_loss. When
/// `accumulate_grad` is set, parameter gradients are added to each tensor's
/// grad buffer.
template <typename T>
LossTerms total_loss(H2LOModel<T>& model, const Volume3D& hf, const Volume3D& lf, const LossWeights& weights,
                     const LossSample& sample, const GaussianDerivativeKernels& kernels, bool accumulate_grad);

template <typename T>
LossTerms total_loss(H2LOModel<T>& model, const Volume3D& hf, const Volume3D& lf, const LossWeights& weights,
                     Rng& rng);

}  // namespace h2lo
