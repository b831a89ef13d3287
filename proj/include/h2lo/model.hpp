#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "h2lo/nn.hpp"
#include "h2lo/tensor.hpp"
#include "h2lo/volume.hpp"

namespace h2lo {

enum class TrunkKind { Siren, ReluMlp };

std::string to_string(TrunkKind k);
TrunkKind trunk_kind_from_string(const std::string& s);

struct ModelConfig {
  /// Output channels of each branch conv; the last entry is P.
  std::vector<int> branch_channels = {32, 32, 64, 64, 128};
  int kernel_size = 3;
  int trunk_width = 256;
  int trunk_hidden_layers = 2;
  double omega0 = 30.0;
  TrunkKind trunk = TrunkKind::Siren;

  int basis_size() const { return branch_channels.back(); }
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Dense coefficient field [P, H, W, D] produced by the branch encoder.
template <typename T>
struct FeatureField {
  Dims dims;
  int channels = 0;
  std::vector<T> data;

  FeatureField() = default;
  FeatureField(Dims d, int p) : dims(d), channels(p), data(static_cast<std::size_t>(p) * d.count(), T(0)) {}

  std::size_t stride() const { return dims.count(); }
  T at(int k, std::size_t voxel) const { return data[k * stride() + voxel]; }
};

/// Intermediate activations kept for the backward pass.
template <typename T>
struct BranchCache {
  nn::PaddedGrid grid{Dims{1, 1, 1}, 1};
  std::vector<std::vector<T>> inputs;  // padded input of each conv layer
};

template <typename T>
struct TrunkCache {
  std::vector<Tensor<T>> inputs;   // input of each dense layer
  std::vector<Tensor<T>> hidden;   // sine argument (Siren) or ReLU output (ReluMlp)
};

/// Branch-trunk operator: prediction(x) = sum_k b_k(u, x) t_k(x) + beta.
template <typename T>
class H2LOModel {
public:
  explicit H2LOModel(ModelConfig config = {}, std::uint64_t seed = 0);

  const ModelConfig& config() const { return config_; }

  struct Layer {
    Tensor<T> weight;
    Tensor<T> bias;
  };
  std::vector<Layer> branch;  // weight [Cout, Cin, K, K, K]
  std::vector<Layer> trunk;   // weight [out, in]
  Tensor<T> beta{std::vector<int>{1}};

  std::vector<Tensor<T>*> parameters();
  std::vector<std::pair<std::string, const Tensor<T>*>> named_parameters() const;
  std::vector<std::pair<std::string, Tensor<T>*>> named_parameters();
  void zero_grad();

private:
  ModelConfig config_;
};

/// Exact number of trainable scalars.
template <typename T>
std::size_t param_count(const H2LOModel<T>& model);
std::size_t param_count(const ModelConfig& config);

template <typename T>
FeatureField<T> branch_forward(const H2LOModel<T>& model, const Volume3D& u, BranchCache<T>* cache = nullptr);
/// Accumulates parameter gradients given dL/dF.
template <typename T>
void branch_backward(H2LOModel<T>& model, const BranchCache<T>& cache, const FeatureField<T>& dfield);

template <typename T>
std::vector<T> read_coefficients(const FeatureField<T>& field, Voxel v);

/// coords [N, 3] -> basis values [N, P].
template <typename T>
Tensor<T> trunk_forward(const H2LOModel<T>& model, const Tensor<T>& coords, TrunkCache<T>* cache = nullptr);
template <typename T>
void trunk_backward(H2LOModel<T>& model, const TrunkCache<T>& cache, const Tensor<T>& dbasis);

template <typename T>
Tensor<T> voxel_coords(const CoordGrid& grid, const std::vector<Voxel>& voxels);

/// Gathers branch coefficients for the listed voxels into [N, P].
template <typename T>
Tensor<T> gather_coefficients(const FeatureField<T>& field, const std::vector<Voxel>& voxels);

/// Inner product of coefficient and basis rows plus beta.
template <typename T>
std::vector<T> combine(const Tensor<T>& coeffs, const Tensor<T>& basis, T beta);

template <typename T>
std::vector<T> operator_eval(const H2LOModel<T>& model, const FeatureField<T>& field,
                             const std::vector<Voxel>& voxels, const CoordGrid& grid);

/// Evaluates the operator on every grid voxel; output clamped to [0, 1].
template <typename T>
Volume3D synthesize_full(const H2LOModel<T>& model, const Volume3D& u);

}  // namespace h2lo
