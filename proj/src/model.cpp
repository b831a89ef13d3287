#include "h2lo/model.hpp"

#include <algorithm>
#include <cmath>

#include "eigen_maps.hpp"
#include "h2lo/rng.hpp"

namespace h2lo {

std::string to_string(TrunkKind k) { return k == TrunkKind::Siren ? "siren" : "relu"; }

TrunkKind trunk_kind_from_string(const std::string& s) {
  if (s == "siren") return TrunkKind::Siren;
  if (s == "relu") return TrunkKind::ReluMlp;
  throw DataError("unknown trunk kind '" + s + "'");
}

void ModelConfig::validate() const {
  if (branch_channels.empty()) throw DataError("model needs at least one branch layer");
  for (int c : branch_channels)
    if (c < 1) throw DataError("branch channel counts must be positive");
  if (kernel_size < 1 || kernel_size % 2 == 0) throw DataError("branch kernel size must be odd");
  if (trunk_width < 1 || trunk_hidden_layers < 0) throw DataError("invalid trunk shape");
  if (!(omega0 > 0.0)) throw DataError("omega0 must be positive");
}

std::size_t param_count(const ModelConfig& c) {
  const std::size_t taps = static_cast<std::size_t>(c.kernel_size) * c.kernel_size * c.kernel_size;
  std::size_t n = 0;
  int cin = 1;
  for (int cout : c.branch_channels) {
    n += static_cast<std::size_t>(cout) * cin * taps + cout;
    cin = cout;
  }
  int in = 3;
  for (int l = 0; l <= c.trunk_hidden_layers; ++l) {
    n += static_cast<std::size_t>(c.trunk_width) * in + c.trunk_width;
    in = c.trunk_width;
  }
  n += static_cast<std::size_t>(c.basis_size()) * in + c.basis_size();
  return n + 1;
}

template <typename T>
H2LOModel<T>::H2LOModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  Rng rng(derive_seed(seed, 0x6d6f64656cULL));
  const int k = config_.kernel_size;

  int cin = 1;
  for (int cout : config_.branch_channels) {
    auto [w, b] = nn::kaiming_init<T>({cout, cin, k, k, k}, rng);
    branch.push_back({std::move(w), std::move(b)});
    cin = cout;
  }

  const int width = config_.trunk_width;
  const int p = config_.basis_size();
  const int n_dense = config_.trunk_hidden_layers + 2;
  for (int l = 0; l < n_dense; ++l) {
    const int in = l == 0 ? 3 : width;
    const int out = l == n_dense - 1 ? p : width;
    if (config_.trunk == TrunkKind::Siren) {
      auto kind = l == 0 ? nn::SirenLayer::First : nn::SirenLayer::Hidden;
      auto [w, b] = nn::siren_init<T>(kind, in, out, config_.omega0, rng);
      trunk.push_back({std::move(w), std::move(b)});
    } else {
      auto [w, b] = nn::kaiming_init<T>({out, in}, rng);
      trunk.push_back({std::move(w), std::move(b)});
    }
  }
}

template <typename T>
std::vector<Tensor<T>*> H2LOModel<T>::parameters() {
  std::vector<Tensor<T>*> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> H2LOModel<T>::named_parameters() {
  std::vector<std::pair<std::string, Tensor<T>*>> out;
  for (std::size_t l = 0; l < branch.size(); ++l) {
    out.emplace_back("branch.conv" + std::to_string(l) + ".weight", &branch[l].weight);
    out.emplace_back("branch.conv" + std::to_string(l) + ".bias", &branch[l].bias);
  }
  for (std::size_t l = 0; l < trunk.size(); ++l) {
    out.emplace_back("trunk.dense" + std::to_string(l) + ".weight", &trunk[l].weight);
    out.emplace_back("trunk.dense" + std::to_string(l) + ".bias", &trunk[l].bias);
  }
  out.emplace_back("beta", &beta);
  return out;
}

template <typename T>
std::vector<std::pair<std::string, const Tensor<T>*>> H2LOModel<T>::named_parameters() const {
  std::vector<std::pair<std::string, const Tensor<T>*>> out;
  for (auto& [name, t] : const_cast<H2LOModel*>(this)->named_parameters()) out.emplace_back(name, t);
  return out;
}

template <typename T>
void H2LOModel<T>::zero_grad() {
  for (Tensor<T>* t : parameters()) t->zero_grad();
}

template <typename T>
std::size_t param_count(const H2LOModel<T>& model) {
  std::size_t n = 0;
  for (const auto& [name, t] : model.named_parameters()) n += t->size();
  return n;
}

// ---------------------------------------------------------------------------
// Branch

template <typename T>
FeatureField<T> branch_forward(const H2LOModel<T>& model, const Volume3D& u, BranchCache<T>* cache) {
  require_finite(u, "branch input");
  const int k = model.config().kernel_size;
  const nn::PaddedGrid g(u.dims(), k / 2);

  std::vector<T> cur(g.size(), T(0));
  for (int i = 0; i < u.dims().h; ++i)
    for (int j = 0; j < u.dims().w; ++j)
      for (int kk = 0; kk < u.dims().d; ++kk) cur[g.index(i, j, kk)] = static_cast<T>(u.at(i, j, kk));

  if (cache) {
    cache->grid = g;
    cache->inputs.clear();
  }
  int cin = 1;
  const std::size_t n_layers = model.branch.size();
  for (std::size_t l = 0; l < n_layers; ++l) {
    const auto& layer = model.branch[l];
    const int cout = layer.weight.dim(0);
    std::vector<T> next(static_cast<std::size_t>(cout) * g.size());
    nn::conv3d_padded_forward(cur.data(), cin, g, layer.weight.data(), layer.bias.data(), cout, k, next.data());
    // ReLU after every layer except the last, so coefficients keep both signs.
    if (l + 1 < n_layers) {
      for (T& v : next) v = v > T(0) ? v : T(0);
    }
    if (cache) {
      cache->inputs.push_back(std::move(cur));
    }
    cur = std::move(next);
    cin = cout;
  }

  FeatureField<T> field(u.dims(), cin);
  nn::unpad_channels(cur.data(), cin, g, field.data.data());
  return field;
}

template <typename T>
void branch_backward(H2LOModel<T>& model, const BranchCache<T>& cache, const FeatureField<T>& dfield) {
  const nn::PaddedGrid& g = cache.grid;
  const int k = model.config().kernel_size;
  const std::size_t n_layers = model.branch.size();
  if (cache.inputs.size() != n_layers) throw DataError("branch_backward: cache does not match model");
  if (dfield.dims != g.inner || dfield.channels != model.config().basis_size()) {
    throw DataError("branch_backward: gradient field shape mismatch");
  }

  std::vector<T> dy(static_cast<std::size_t>(dfield.channels) * g.size());
  nn::pad_channels(dfield.data.data(), dfield.channels, g, dy.data());
  for (std::size_t l = n_layers; l-- > 0;) {
    auto& layer = model.branch[l];
    layer.weight.ensure_grad();
    layer.bias.ensure_grad();
    const int cout = layer.weight.dim(0);
    const int cin = layer.weight.dim(1);
    std::vector<T> dx;
    if (l > 0) dx.resize(static_cast<std::size_t>(cin) * g.size());
    nn::conv3d_padded_backward(cache.inputs[l].data(), cin, g, layer.weight.data(), cout, k, dy.data(),
                               l > 0 ? dx.data() : nullptr, layer.weight.grad.data(), layer.bias.grad.data());
    if (l > 0) {
      const auto& a = cache.inputs[l];  // relu output of layer l-1
      for (std::size_t n = 0; n < dx.size(); ++n)
        if (!(a[n] > T(0))) dx[n] = T(0);
      dy = std::move(dx);
    }
  }
}

template <typename T>
std::vector<T> read_coefficients(const FeatureField<T>& field, Voxel v) {
  if (!field.dims.contains(v.i, v.j, v.k)) throw DataError("read_coefficients: voxel out of bounds");
  const std::size_t at = field.dims.index(v.i, v.j, v.k);
  std::vector<T> out(field.channels);
  for (int c = 0; c < field.channels; ++c) out[c] = field.at(c, at);
  return out;
}

// ---------------------------------------------------------------------------
// Trunk

template <typename T>
Tensor<T> trunk_forward(const H2LOModel<T>& model, const Tensor<T>& coords, TrunkCache<T>* cache) {
  if (coords.shape.size() != 2 || coords.dim(1) != 3) throw DataError("trunk_forward: coords must be [N, 3]");
  if (cache) {
    cache->inputs.clear();
    cache->hidden.clear();
  }
  const bool siren = model.config().trunk == TrunkKind::Siren;
  const T omega0 = static_cast<T>(model.config().omega0);
  Tensor<T> x = coords;
  const std::size_t n_dense = model.trunk.size();
  for (std::size_t l = 0; l < n_dense; ++l) {
    const auto& layer = model.trunk[l];
    Tensor<T> y;
    if (l + 1 == n_dense) {
      y = nn::linear_forward(layer.weight, layer.bias, x);
    } else if (siren) {
      Tensor<T> pre;
      y = nn::sine_layer(layer.weight, layer.bias, x, omega0, cache ? &pre : nullptr);
      if (cache) cache->hidden.push_back(std::move(pre));
    } else {
      y = nn::relu(nn::linear_forward(layer.weight, layer.bias, x));
      if (cache) cache->hidden.push_back(y);
    }
    if (cache) cache->inputs.push_back(std::move(x));
    x = std::move(y);
  }
  return x;
}

template <typename T>
void trunk_backward(H2LOModel<T>& model, const TrunkCache<T>& cache, const Tensor<T>& dbasis) {
  const std::size_t n_dense = model.trunk.size();
  if (cache.inputs.size() != n_dense) throw DataError("trunk_backward: cache does not match model");
  const bool siren = model.config().trunk == TrunkKind::Siren;
  const T omega0 = static_cast<T>(model.config().omega0);
  Tensor<T> dy = dbasis;
  for (std::size_t l = n_dense; l-- > 0;) {
    auto& layer = model.trunk[l];
    if (l + 1 == n_dense) {
      dy = nn::linear_backward(layer.weight, layer.bias, cache.inputs[l], dy);
    } else if (siren) {
      dy = nn::sine_layer_backward(layer.weight, layer.bias, cache.inputs[l], cache.hidden[l], omega0, dy);
    } else {
      dy = nn::linear_backward(layer.weight, layer.bias, cache.inputs[l], nn::relu_backward(cache.hidden[l], dy));
    }
  }
}

// ---------------------------------------------------------------------------
// Operator

template <typename T>
Tensor<T> voxel_coords(const CoordGrid& grid, const std::vector<Voxel>& voxels) {
  Tensor<T> c({static_cast<int>(voxels.size()), 3});
  for (std::size_t n = 0; n < voxels.size(); ++n) {
    const auto& v = voxels[n];
    if (!grid.dims().contains(v.i, v.j, v.k)) throw DataError("voxel out of bounds for coordinate grid");
    const auto x = grid.at(v);
    for (int a = 0; a < 3; ++a) c.values[3 * n + a] = static_cast<T>(x[a]);
  }
  return c;
}

template <typename T>
Tensor<T> gather_coefficients(const FeatureField<T>& field, const std::vector<Voxel>& voxels) {
  const int p = field.channels;
  Tensor<T> out({static_cast<int>(voxels.size()), p});
  for (std::size_t n = 0; n < voxels.size(); ++n) {
    const auto& v = voxels[n];
    if (!field.dims.contains(v.i, v.j, v.k)) throw DataError("voxel out of bounds for feature field");
    const std::size_t at = field.dims.index(v.i, v.j, v.k);
    T* row = &out.values[n * p];
    for (int c = 0; c < p; ++c) row[c] = field.at(c, at);
  }
  return out;
}

template <typename T>
std::vector<T> combine(const Tensor<T>& coeffs, const Tensor<T>& basis, T beta) {
  require_shape(basis.shape, coeffs.shape, "combine");
  // Fixed summation order; Eigen's reductions vary with buffer alignment.
  const std::size_t rows = static_cast<std::size_t>(coeffs.dim(0));
  const std::size_t p = static_cast<std::size_t>(coeffs.dim(1));
  std::vector<T> out(rows);
  for (std::size_t n = 0; n < rows; ++n) {
    const T* a = &coeffs.values[n * p];
    const T* b = &basis.values[n * p];
    T acc = T(0);
    for (std::size_t c = 0; c < p; ++c) acc += a[c] * b[c];
    out[n] = acc + beta;
  }
  return out;
}

template <typename T>
std::vector<T> operator_eval(const H2LOModel<T>& model, const FeatureField<T>& field,
                             const std::vector<Voxel>& voxels, const CoordGrid& grid) {
  if (grid.dims() != field.dims) throw DataError("operator_eval: grid and field dims differ");
  if (field.channels != model.config().basis_size()) throw DataError("operator_eval: field has wrong P");
  const Tensor<T> coeffs = gather_coefficients(field, voxels);
  const Tensor<T> basis = trunk_forward(model, voxel_coords<T>(grid, voxels));
  return combine(coeffs, basis, model.beta.values[0]);
}

template <typename T>
Volume3D synthesize_full(const H2LOModel<T>& model, const Volume3D& u) {
  const Dims dims = u.dims();
  const FeatureField<T> field = branch_forward(model, u);
  const CoordGrid grid(dims);
  Volume3D out(dims);
  out.set_spacing(u.spacing());

  constexpr std::size_t kChunk = 8192;
  std::vector<Voxel> voxels;
  voxels.reserve(kChunk);
  std::size_t flat = 0;
  auto flush = [&] {
    const auto pred = operator_eval(model, field, voxels, grid);
    for (std::size_t n = 0; n < pred.size(); ++n, ++flat) {
      const double v = static_cast<double>(pred[n]);
      if (!std::isfinite(v)) throw NumericalError("synthesize_full: non-finite prediction at voxel " + std::to_string(flat));
      out[flat] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
    voxels.clear();
  };
  for (int i = 0; i < dims.h; ++i)
    for (int j = 0; j < dims.w; ++j)
      for (int k = 0; k < dims.d; ++k) {
        voxels.push_back({i, j, k});
        if (voxels.size() == kChunk) flush();
      }
  if (!voxels.empty()) flush();
  return out;
}

#define H2LO_INSTANTIATE_MODEL(T)                                                                  \
  template class H2LOModel<T>;                                                                     \
  template std::size_t param_count(const H2LOModel<T>&);                                           \
  template FeatureField<T> branch_forward(const H2LOModel<T>&, const Volume3D&, BranchCache<T>*);  \
  template void branch_backward(H2LOModel<T>&, const BranchCache<T>&, const FeatureField<T>&);     \
  template std::vector<T> read_coefficients(const FeatureField<T>&, Voxel);                        \
  template Tensor<T> trunk_forward(const H2LOModel<T>&, const Tensor<T>&, TrunkCache<T>*);         \
  template void trunk_backward(H2LOModel<T>&, const TrunkCache<T>&, const Tensor<T>&);             \
  template Tensor<T> voxel_coords(const CoordGrid&, const std::vector<Voxel>&);                    \
  template Tensor<T> gather_coefficients(const FeatureField<T>&, const std::vector<Voxel>&);       \
  template std::vector<T> combine(const Tensor<T>&, const Tensor<T>&, T);                          \
  template std::vector<T> operator_eval(const H2LOModel<T>&, const FeatureField<T>&,               \
                                        const std::vector<Voxel>&, const CoordGrid&);              \
  template Volume3D synthesize_full(const H2LOModel<T>&, const Volume3D&);

H2LO_INSTANTIATE_MODEL(float)
H2LO_INSTANTIATE_MODEL(double)

}  // namespace h2lo
