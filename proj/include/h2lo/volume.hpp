#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace h2lo {

/// Grid extent (H, W, D). Flat index is i*W*D + j*D + k (D fastest).
struct Dims {
  int h = 0;
  int w = 0;
  int d = 0;

  std::size_t count() const {
    return static_cast<std::size_t>(h) * static_cast<std::size_t>(w) * static_cast<std::size_t>(d);
  }
  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * w + j) * d + k;
  }
  bool contains(int i, int j, int k) const {
    return i >= 0 && j >= 0 && k >= 0 && i < h && j < w && k < d;
  }
  bool positive() const { return h > 0 && w > 0 && d > 0; }

  friend auto operator<=>(const Dims&, const Dims&) = default;
};

std::string to_string(const Dims& d);

struct Voxel {
  int i = 0;
  int j = 0;
  int k = 0;
  friend auto operator<=>(const Voxel&, const Voxel&) = default;
};

using Spacing = std::array<double, 3>;

/// Dense scalar field on a regular grid. Values are float32, row-major with D fastest.
class Volume3D {
public:
  Volume3D() = default;
  explicit Volume3D(Dims dims, float fill = 0.0f);
  Volume3D(Dims dims, std::vector<float> data, std::optional<Spacing> spacing = std::nullopt);

  const Dims& dims() const { return dims_; }
  std::size_t size() const { return data_.size(); }
  std::span<const float> data() const { return data_; }
  std::span<float> data() { return data_; }
  const std::optional<Spacing>& spacing() const { return spacing_; }
  void set_spacing(std::optional<Spacing> s) { spacing_ = s; }

  float at(int i, int j, int k) const { return data_[dims_.index(i, j, k)]; }
  float& at(int i, int j, int k) { return data_[dims_.index(i, j, k)]; }
  float operator[](std::size_t n) const { return data_[n]; }
  float& operator[](std::size_t n) { return data_[n]; }

  float max_value() const;

  friend bool operator==(const Volume3D& a, const Volume3D& b) {
    return a.dims_ == b.dims_ && a.data_ == b.data_;
  }

private:
  Dims dims_;
  std::vector<float> data_;
  std::optional<Spacing> spacing_;
};

struct ForegroundMask {
  Dims dims;
  std::vector<std::uint8_t> bits;

  std::size_t count() const;
  bool test(std::size_t n) const { return bits[n] != 0; }
};

/// Normalized voxel-center coordinates in [-1, 1]^3. The grid is a tensor
/// product, so one coordinate array per axis is stored.
class CoordGrid {
public:
  explicit CoordGrid(Dims dims);

  const Dims& dims() const { return dims_; }
  std::array<double, 3> at(int i, int j, int k) const { return {x_[i], y_[j], z_[k]}; }
  std::array<double, 3> at(const Voxel& v) const { return at(v.i, v.j, v.k); }
  std::span<const double> axis(int a) const { return a == 0 ? x_ : (a == 1 ? y_ : z_); }

  /// -1 + 2*idx/(n-1), or 0 when n == 1.
  static double axis_coord(int idx, int n);

private:
  Dims dims_;
  std::vector<double> x_, y_, z_;
};

enum class VolumeFormat { RawVol, Nifti1 };

/// Picks NIfTI for .nii paths, raw-vol otherwise.
VolumeFormat format_from_path(const std::filesystem::path& path);

Volume3D load_volume(const std::filesystem::path& path, VolumeFormat format);
Volume3D load_volume(const std::filesystem::path& path);
void save_volume(const Volume3D& v, const std::filesystem::path& path);

/// raw-vol byte encoding, exposed for bit-exact tests.
std::vector<std::uint8_t> encode_raw_volume(const Volume3D& v);
Volume3D decode_raw_volume(std::span<const std::uint8_t> bytes);

Volume3D decode_nifti1(std::span<const std::uint8_t> bytes);

Volume3D max_normalize(const Volume3D& v);
ForegroundMask foreground_mask(const Volume3D& hf, double threshold = 0.01);
Volume3D crop_subvolume(const Volume3D& v, Voxel origin, Dims size);
CoordGrid coord_grid(Dims dims);

/// Throws DataError if any value is NaN or infinite.
void require_finite(const Volume3D& v, const std::string& what);

/// Separable Gaussian blur, radius ceil(3 sigma), edge voxels replicated.
/// sigma == 0 returns the input unchanged.
Volume3D gaussian_blur(const Volume3D& v, double sigma);

}  // namespace h2lo
