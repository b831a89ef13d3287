#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "h2lo/error.hpp"

namespace h2lo {

/// Row-major dense array with an optional gradient buffer of equal length.
template <typename T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> values;
  std::vector<T> grad;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, T fill = T(0)) : shape(std::move(s)) {
    values.assign(numel(shape), fill);
  }
  Tensor(std::vector<int> s, std::vector<T> v) : shape(std::move(s)), values(std::move(v)) {
    if (values.size() != numel(shape)) throw DataError("tensor values do not match shape");
  }

  static std::size_t numel(const std::vector<int>& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1},
                           [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
  }

  std::size_t size() const { return values.size(); }
  int dim(std::size_t a) const { return shape.at(a); }
  T* data() { return values.data(); }
  const T* data() const { return values.data(); }

  /// Allocates (if needed) and zeroes the gradient buffer.
  void zero_grad() { grad.assign(values.size(), T(0)); }
  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), T(0));
  }
};

std::string shape_string(const std::vector<int>& shape);

inline void require_shape(const std::vector<int>& got, const std::vector<int>& want, const char* what) {
  if (got != want) {
    throw DataError(std::string(what) + ": expected shape " + shape_string(want) + ", got " +
                    shape_string(got));
  }
}

}  // namespace h2lo
