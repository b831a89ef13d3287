#pragma once

#include <utility>

#include "h2lo/rng.hpp"
#include "h2lo/tensor.hpp"
#include "h2lo/volume.hpp"

namespace h2lo::nn {

// Dense layers. x is [batch, in], W is [out, in], b is [out].
// Backward functions accumulate into W.grad / b.grad and return dL/dx.

template <typename T>
Tensor<T> linear_forward(const Tensor<T>& W, const Tensor<T>& b, const Tensor<T>& x);
template <typename T>
Tensor<T> linear_backward(Tensor<T>& W, Tensor<T>& b, const Tensor<T>& x, const Tensor<T>& dy);

/// sin(omega0 * x W^T + b). The bias is added after the omega0 scaling.
/// When `pre` is non-null it receives the sine argument for use in backward.
template <typename T>
Tensor<T> sine_layer(const Tensor<T>& W, const Tensor<T>& b, const Tensor<T>& x, T omega0,
                     Tensor<T>* pre = nullptr);
template <typename T>
Tensor<T> sine_layer_backward(Tensor<T>& W, Tensor<T>& b, const Tensor<T>& x, const Tensor<T>& pre,
                              T omega0, const Tensor<T>& dy);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);
/// Uses the forward output y; subgradient at 0 is 0.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& y, const Tensor<T>& dy);

/// Halo-padded channel stack used by the convolution kernels. Each channel
/// occupies (H+2r)(W+2r)(D+2r) contiguous values; the halo is kept at zero so
/// that consecutive "same" convolutions need no repacking.
struct PaddedGrid {
  Dims inner;
  int r = 1;
  Dims outer;
  std::ptrdiff_t first = 0;  // flat index of the first interior voxel
  std::ptrdiff_t span = 0;   // first..last interior voxel, inclusive

  PaddedGrid(Dims inner, int radius);
  std::size_t size() const { return outer.count(); }
  std::size_t index(int i, int j, int k) const { return outer.index(i + r, j + r, k + r); }
  std::ptrdiff_t tap_offset(int a, int b, int c) const;
};

template <typename T>
void zero_halo(T* data, int channels, const PaddedGrid& g);
template <typename T>
void pad_channels(const T* src, int channels, const PaddedGrid& g, T* dst);
template <typename T>
void unpad_channels(const T* src, int channels, const PaddedGrid& g, T* dst);

/// y[cout] = bias + sum_cin sum_taps w * x, evaluated on padded stacks.
/// `y` must hold cout*g.size() values; its halo is zeroed on return.
template <typename T>
void conv3d_padded_forward(const T* x, int cin, const PaddedGrid& g, const T* w, const T* bias,
                           int cout, int ksize, T* y);
/// Accumulates dw and db; overwrites dx (may be null) with the input gradient.
template <typename T>
void conv3d_padded_backward(const T* x, int cin, const PaddedGrid& g, const T* w, int cout,
                            int ksize, const T* dy, T* dx, T* dw, T* db);

/// Cross-correlation with zero padding that preserves spatial dims.
/// input [Cin,H,W,D], kernels [Cout,Cin,K,K,K] with K odd, bias [Cout].
template <typename T>
Tensor<T> conv3d_same(const Tensor<T>& input, const Tensor<T>& kernels, const Tensor<T>& bias);
template <typename T>
Tensor<T> conv3d_same_backward(const Tensor<T>& input, Tensor<T>& kernels, Tensor<T>& bias,
                               const Tensor<T>& dy);

enum class SirenLayer { First, Hidden };

/// First layer: U(-1/fan_in, 1/fan_in); hidden: U(-sqrt(6/fan_in)/omega0, +).
/// Biases are drawn from the same range as the weights.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> siren_init(SirenLayer kind, int fan_in, int fan_out, double omega0,
                                           Rng& rng);

/// Kaiming-uniform weights, U(-sqrt(6/fan_in), +), for ReLU layers. Bias zero.
/// `weight_shape[0]` is fan-out; fan-in is the product of the rest.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> kaiming_init(const std::vector<int>& weight_shape, Rng& rng);

}  // namespace h2lo::nn
