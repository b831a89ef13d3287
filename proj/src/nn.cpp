#include "h2lo/nn.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "eigen_maps.hpp"

namespace h2lo {

std::string shape_string(const std::vector<int>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
  return s + "]";
}

namespace nn {

namespace {

template <typename T>
void check_dense(const Tensor<T>& W, const Tensor<T>& b, const Tensor<T>& x, const char* what) {
  if (W.shape.size() != 2 || x.shape.size() != 2) throw DataError(std::string(what) + ": W and x must be 2-D");
  require_shape(b.shape, {W.dim(0)}, what);
  if (x.dim(1) != W.dim(1)) {
    throw DataError(std::string(what) + ": input width " + std::to_string(x.dim(1)) +
                    " does not match weight " + shape_string(W.shape));
  }
}

// out[c] += sum_r m(r, c) in row order.
template <typename T>
void add_column_sums(const T* m, Eigen::Index rows, Eigen::Index cols, T* out) {
  std::vector<T> acc(static_cast<std::size_t>(cols), T(0));
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) acc[c] += m[r * cols + c];
  for (Eigen::Index c = 0; c < cols; ++c) out[c] += acc[c];
}

}  // namespace

template <typename T>
Tensor<T> linear_forward(const Tensor<T>& W, const Tensor<T>& b, const Tensor<T>& x) {
  check_dense(W, b, x, "linear_forward");
  Tensor<T> y({x.dim(0), W.dim(0)});
  auto Y = as_matrix(y);
  Y.noalias() = as_matrix(x) * as_matrix(W).transpose();
  Y.rowwise() += as_row(b);
  return y;
}

template <typename T>
Tensor<T> linear_backward(Tensor<T>& W, Tensor<T>& b, const Tensor<T>& x, const Tensor<T>& dy) {
  check_dense(W, b, x, "linear_backward");
  require_shape(dy.shape, {x.dim(0), W.dim(0)}, "linear_backward dy");
  W.ensure_grad();
  b.ensure_grad();
  const auto dY = as_matrix(dy);
  grad_matrix(W).noalias() += dY.transpose() * as_matrix(x);
  add_column_sums(dy.data(), dY.rows(), dY.cols(), b.grad.data());
  Tensor<T> dx({x.dim(0), x.dim(1)});
  as_matrix(dx).noalias() = dY * as_matrix(W);
  return dx;
}

template <typename T>
Tensor<T> sine_layer(const Tensor<T>& W, const Tensor<T>& b, const Tensor<T>& x, T omega0,
                     Tensor<T>* pre) {
  check_dense(W, b, x, "sine_layer");
  Tensor<T> z({x.dim(0), W.dim(0)});
  auto Z = as_matrix(z);
  Z.noalias() = omega0 * (as_matrix(x) * as_matrix(W).transpose());
  Z.rowwise() += as_row(b);
  // Aligned destination: Eigen otherwise mixes scalar and packet sin depending on the address.
  const RowMat<T> sz = Z.array().sin();
  Tensor<T> y({x.dim(0), W.dim(0)});
  std::copy_n(sz.data(), sz.size(), y.data());
  if (pre) *pre = std::move(z);
  return y;
}

template <typename T>
Tensor<T> sine_layer_backward(Tensor<T>& W, Tensor<T>& b, const Tensor<T>& x, const Tensor<T>& pre,
                              T omega0, const Tensor<T>& dy) {
  check_dense(W, b, x, "sine_layer_backward");
  require_shape(pre.shape, dy.shape, "sine_layer_backward pre");
  W.ensure_grad();
  b.ensure_grad();
  RowMat<T> dz = as_matrix(dy).array() * as_matrix(pre).array().cos();
  grad_matrix(W).noalias() += omega0 * (dz.transpose() * as_matrix(x));
  add_column_sums(dz.data(), dz.rows(), dz.cols(), b.grad.data());
  Tensor<T> dx({x.dim(0), x.dim(1)});
  as_matrix(dx).noalias() = omega0 * (dz * as_matrix(W));
  return dx;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y = x;
  y.grad.clear();
  for (T& v : y.values) v = v > T(0) ? v : T(0);
  return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& y, const Tensor<T>& dy) {
  require_shape(dy.shape, y.shape, "relu_backward");
  Tensor<T> dx(dy.shape);
  for (std::size_t n = 0; n < dx.size(); ++n) dx.values[n] = y.values[n] > T(0) ? dy.values[n] : T(0);
  return dx;
}

// ---------------------------------------------------------------------------
// Padded convolution

PaddedGrid::PaddedGrid(Dims in, int radius)
    : inner(in), r(radius), outer{in.h + 2 * radius, in.w + 2 * radius, in.d + 2 * radius} {
  if (!in.positive() || radius < 0) throw DataError("invalid padded grid");
  first = static_cast<std::ptrdiff_t>(index(0, 0, 0));
  span = static_cast<std::ptrdiff_t>(index(in.h - 1, in.w - 1, in.d - 1)) - first + 1;
}

std::ptrdiff_t PaddedGrid::tap_offset(int a, int b, int c) const {
  return (static_cast<std::ptrdiff_t>(a - r) * outer.w + (b - r)) * outer.d + (c - r);
}

template <typename T>
void zero_halo(T* data, int channels, const PaddedGrid& g) {
  const std::size_t slab = static_cast<std::size_t>(g.outer.w) * g.outer.d;
  for (int c = 0; c < channels; ++c) {
    T* ch = data + static_cast<std::size_t>(c) * g.size();
    for (int i = 0; i < g.outer.h; ++i) {
      T* s = ch + i * slab;
      if (i < g.r || i >= g.r + g.inner.h) {
        std::fill(s, s + slab, T(0));
        continue;
      }
      for (int j = 0; j < g.outer.w; ++j) {
        T* row = s + static_cast<std::size_t>(j) * g.outer.d;
        if (j < g.r || j >= g.r + g.inner.w) {
          std::fill(row, row + g.outer.d, T(0));
        } else {
          std::fill(row, row + g.r, T(0));
          std::fill(row + g.r + g.inner.d, row + g.outer.d, T(0));
        }
      }
    }
  }
}

template <typename T>
void pad_channels(const T* src, int channels, const PaddedGrid& g, T* dst) {
  std::fill(dst, dst + static_cast<std::size_t>(channels) * g.size(), T(0));
  const Dims& in = g.inner;
  for (int c = 0; c < channels; ++c) {
    const T* s = src + static_cast<std::size_t>(c) * in.count();
    T* d = dst + static_cast<std::size_t>(c) * g.size();
    for (int i = 0; i < in.h; ++i)
      for (int j = 0; j < in.w; ++j) std::copy_n(s + in.index(i, j, 0), in.d, d + g.index(i, j, 0));
  }
}

template <typename T>
void unpad_channels(const T* src, int channels, const PaddedGrid& g, T* dst) {
  const Dims& in = g.inner;
  for (int c = 0; c < channels; ++c) {
    const T* s = src + static_cast<std::size_t>(c) * g.size();
    T* d = dst + static_cast<std::size_t>(c) * in.count();
    for (int i = 0; i < in.h; ++i)
      for (int j = 0; j < in.w; ++j) std::copy_n(s + g.index(i, j, 0), in.d, d + in.index(i, j, 0));
  }
}

namespace {

// Columns per im2col block. Keeps the block near 16 MB at 27*64 rows.
constexpr std::ptrdiff_t kColBlock = 2048;

std::vector<std::ptrdiff_t> tap_offsets(const PaddedGrid& g, int ksize) {
  const int kr = ksize / 2;
  std::vector<std::ptrdiff_t> offs;
  offs.reserve(static_cast<std::size_t>(ksize) * ksize * ksize);
  for (int a = 0; a < ksize; ++a)
    for (int b = 0; b < ksize; ++b)
      for (int c = 0; c < ksize; ++c) offs.push_back(g.tap_offset(a + g.r - kr, b + g.r - kr, c + g.r - kr));
  return offs;
}

// cols[(ci*taps + t), m] = x[ci, start + offs[t] + m]
template <typename T>
void im2col(const T* x, int cin, std::size_t plane, const std::vector<std::ptrdiff_t>& offs, std::ptrdiff_t start,
            std::ptrdiff_t n, RowMat<T>& cols) {
  const auto taps = static_cast<int>(offs.size());
  for (int ci = 0; ci < cin; ++ci)
    for (int t = 0; t < taps; ++t) std::copy_n(x + ci * plane + start + offs[t], n, &cols(ci * taps + t, 0));
}

}  // namespace

template <typename T>
void conv3d_padded_forward(const T* x, int cin, const PaddedGrid& g, const T* w, const T* bias,
                           int cout, int ksize, T* y) {
  if (ksize % 2 == 0 || ksize / 2 > g.r) throw DataError("conv3d: kernel size must be odd and fit the halo");
  const auto sp = static_cast<Eigen::Index>(g.size());
  const auto offs = tap_offsets(g, ksize);
  const int rows = cin * static_cast<int>(offs.size());
  ConstRowMatMap<T> W(w, cout, rows);
  RowMatMap<T> Y(y, cout, sp);
  Y.setZero();

  RowMat<T> cols(rows, kColBlock);
  for (std::ptrdiff_t c0 = 0; c0 < g.span; c0 += kColBlock) {
    const std::ptrdiff_t n = std::min(kColBlock, g.span - c0);
    const std::ptrdiff_t start = g.first + c0;
    im2col(x, cin, g.size(), offs, start, n, cols);
    auto out = Y.middleCols(start, n);
    out.noalias() = W * cols.leftCols(n);
    if (bias) {
      for (int o = 0; o < cout; ++o) out.row(o).array() += bias[o];
    }
  }
  zero_halo(y, cout, g);
}

template <typename T>
void conv3d_padded_backward(const T* x, int cin, const PaddedGrid& g, const T* w, int cout,
                            int ksize, const T* dy, T* dx, T* dw, T* db) {
  if (ksize % 2 == 0 || ksize / 2 > g.r) throw DataError("conv3d: kernel size must be odd and fit the halo");
  const auto sp = static_cast<Eigen::Index>(g.size());
  const auto offs = tap_offsets(g, ksize);
  const auto taps = static_cast<int>(offs.size());
  const int rows = cin * taps;
  ConstRowMatMap<T> W(w, cout, rows);
  ConstRowMatMap<T> dY(dy, cout, sp);

  if (db) {
    for (int o = 0; o < cout; ++o) {
      const T* row = dy + static_cast<std::size_t>(o) * g.size() + g.first;
      T acc = T(0);
      for (std::ptrdiff_t m = 0; m < g.span; ++m) acc += row[m];
      db[o] += acc;
    }
  }
  if (dx) std::fill(dx, dx + static_cast<std::size_t>(cin) * g.size(), T(0));

  RowMat<T> cols(rows, kColBlock);
  RowMat<T> dcols(rows, kColBlock);
  RowMat<T> dw_acc = RowMat<T>::Zero(cout, rows);
  for (std::ptrdiff_t c0 = 0; c0 < g.span; c0 += kColBlock) {
    const std::ptrdiff_t n = std::min(kColBlock, g.span - c0);
    const std::ptrdiff_t start = g.first + c0;
    const auto dout = dY.middleCols(start, n);
    if (dw) {
      im2col(x, cin, g.size(), offs, start, n, cols);
      dw_acc.noalias() += dout * cols.leftCols(n).transpose();
    }
    if (dx) {
      dcols.leftCols(n).noalias() = W.transpose() * dout;
      for (int ci = 0; ci < cin; ++ci)
        for (int t = 0; t < taps; ++t) {
          T* dst = dx + ci * g.size() + start + offs[t];
          const T* src = &dcols(ci * taps + t, 0);
          for (std::ptrdiff_t m = 0; m < n; ++m) dst[m] += src[m];
        }
    }
  }
  if (dw) {
    for (int o = 0; o < cout; ++o)
      for (int r = 0; r < rows; ++r) dw[static_cast<std::size_t>(o) * rows + r] += dw_acc(o, r);
  }
  if (dx) zero_halo(dx, cin, g);
}

namespace {

template <typename T>
void check_conv(const Tensor<T>& input, const Tensor<T>& kernels, const Tensor<T>& bias) {
  if (input.shape.size() != 4) throw DataError("conv3d_same: input must be [Cin,H,W,D]");
  if (kernels.shape.size() != 5) throw DataError("conv3d_same: kernels must be [Cout,Cin,K,K,K]");
  const int k = kernels.dim(2);
  if (k % 2 == 0 || kernels.dim(3) != k || kernels.dim(4) != k) {
    throw DataError("conv3d_same: kernel must be cubic with odd size");
  }
  if (kernels.dim(1) != input.dim(0)) throw DataError("conv3d_same: channel mismatch");
  require_shape(bias.shape, {kernels.dim(0)}, "conv3d_same bias");
}

}  // namespace

template <typename T>
Tensor<T> conv3d_same(const Tensor<T>& input, const Tensor<T>& kernels, const Tensor<T>& bias) {
  check_conv(input, kernels, bias);
  const int cin = input.dim(0), cout = kernels.dim(0), k = kernels.dim(2);
  const Dims dims{input.dim(1), input.dim(2), input.dim(3)};
  const PaddedGrid g(dims, k / 2);
  std::vector<T> xp(static_cast<std::size_t>(cin) * g.size());
  std::vector<T> yp(static_cast<std::size_t>(cout) * g.size());
  pad_channels(input.data(), cin, g, xp.data());
  conv3d_padded_forward(xp.data(), cin, g, kernels.data(), bias.data(), cout, k, yp.data());
  Tensor<T> y({cout, dims.h, dims.w, dims.d});
  unpad_channels(yp.data(), cout, g, y.data());
  return y;
}

template <typename T>
Tensor<T> conv3d_same_backward(const Tensor<T>& input, Tensor<T>& kernels, Tensor<T>& bias,
                               const Tensor<T>& dy) {
  check_conv(input, kernels, bias);
  const int cin = input.dim(0), cout = kernels.dim(0), k = kernels.dim(2);
  const Dims dims{input.dim(1), input.dim(2), input.dim(3)};
  require_shape(dy.shape, {cout, dims.h, dims.w, dims.d}, "conv3d_same_backward dy");
  kernels.ensure_grad();
  bias.ensure_grad();
  const PaddedGrid g(dims, k / 2);
  std::vector<T> xp(static_cast<std::size_t>(cin) * g.size());
  std::vector<T> dyp(static_cast<std::size_t>(cout) * g.size());
  std::vector<T> dxp(static_cast<std::size_t>(cin) * g.size());
  pad_channels(input.data(), cin, g, xp.data());
  pad_channels(dy.data(), cout, g, dyp.data());
  conv3d_padded_backward(xp.data(), cin, g, kernels.data(), cout, k, dyp.data(), dxp.data(),
                         kernels.grad.data(), bias.grad.data());
  Tensor<T> dx(input.shape);
  unpad_channels(dxp.data(), cin, g, dx.data());
  return dx;
}

// ---------------------------------------------------------------------------
// Initialization

template <typename T>
std::pair<Tensor<T>, Tensor<T>> siren_init(SirenLayer kind, int fan_in, int fan_out, double omega0,
                                           Rng& rng) {
  if (fan_in < 1 || fan_out < 1) throw DataError("siren_init: fan_in and fan_out must be >= 1");
  const double bound = kind == SirenLayer::First ? 1.0 / fan_in : std::sqrt(6.0 / fan_in) / omega0;
  Tensor<T> W({fan_out, fan_in});
  Tensor<T> b({fan_out});
  for (T& v : W.values) v = static_cast<T>(rng.uniform(-bound, bound));
  for (T& v : b.values) v = static_cast<T>(rng.uniform(-bound, bound));
  return {std::move(W), std::move(b)};
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> kaiming_init(const std::vector<int>& weight_shape, Rng& rng) {
  if (weight_shape.size() < 2) throw DataError("kaiming_init: weight must have rank >= 2");
  const std::size_t fan_in = Tensor<T>::numel(weight_shape) / static_cast<std::size_t>(weight_shape[0]);
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  Tensor<T> W(weight_shape);
  for (T& v : W.values) v = static_cast<T>(rng.uniform(-bound, bound));
  return {std::move(W), Tensor<T>({weight_shape[0]})};
}

#define H2LO_INSTANTIATE_NN(T)                                                                       \
  template Tensor<T> linear_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);           \
  template Tensor<T> linear_backward(Tensor<T>&, Tensor<T>&, const Tensor<T>&, const Tensor<T>&);    \
  template Tensor<T> sine_layer(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T, Tensor<T>*); \
  template Tensor<T> sine_layer_backward(Tensor<T>&, Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                         T, const Tensor<T>&);                                       \
  template Tensor<T> relu(const Tensor<T>&);                                                         \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                              \
  template void zero_halo(T*, int, const PaddedGrid&);                                               \
  template void pad_channels(const T*, int, const PaddedGrid&, T*);                                  \
  template void unpad_channels(const T*, int, const PaddedGrid&, T*);                                \
  template void conv3d_padded_forward(const T*, int, const PaddedGrid&, const T*, const T*, int, int, \
                                      T*);                                                           \
  template void conv3d_padded_backward(const T*, int, const PaddedGrid&, const T*, int, int,         \
                                       const T*, T*, T*, T*);                                        \
  template Tensor<T> conv3d_same(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);              \
  template Tensor<T> conv3d_same_backward(const Tensor<T>&, Tensor<T>&, Tensor<T>&, const Tensor<T>&); \
  template std::pair<Tensor<T>, Tensor<T>> siren_init(SirenLayer, int, int, double, Rng&);           \
  template std::pair<Tensor<T>, Tensor<T>> kaiming_init(const std::vector<int>&, Rng&);

H2LO_INSTANTIATE_NN(float)
H2LO_INSTANTIATE_NN(double)

}  // namespace nn
}  // namespace h2lo
