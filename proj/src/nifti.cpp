// Minimal NIfTI-1 single-file reader (.nii, uncompressed).

#include <bit>
#include <cmath>
#include <cstring>

#include "h2lo/error.hpp"
#include "h2lo/volume.hpp"

namespace h2lo {

namespace {

constexpr std::size_t kHeaderSize = 348;
constexpr std::int16_t kDtInt16 = 4;
constexpr std::int16_t kDtFloat32 = 16;

constexpr std::uint32_t bswap(std::uint32_t v) { return __builtin_bswap32(v); }
constexpr std::uint16_t bswap(std::uint16_t v) { return __builtin_bswap16(v); }

class Reader {
public:
  Reader(std::span<const std::uint8_t> bytes, bool swap) : bytes_(bytes), swap_(swap) {}

  std::uint32_t u32(std::size_t at) const {
    check(at, 4);
    std::uint32_t v = 0;
    std::memcpy(&v, bytes_.data() + at, 4);
    if constexpr (std::endian::native == std::endian::big) v = bswap(v);
    return swap_ ? bswap(v) : v;
  }
  std::int32_t i32(std::size_t at) const { return static_cast<std::int32_t>(u32(at)); }
  std::int16_t i16(std::size_t at) const {
    check(at, 2);
    std::uint16_t v = 0;
    std::memcpy(&v, bytes_.data() + at, 2);
    if constexpr (std::endian::native == std::endian::big) v = bswap(v);
    return static_cast<std::int16_t>(swap_ ? bswap(v) : v);
  }
  float f32(std::size_t at) const { return std::bit_cast<float>(u32(at)); }

private:
  void check(std::size_t at, std::size_t n) const {
    if (at + n > bytes_.size()) throw FormatError("NIfTI data truncated", bytes_.size());
  }
  std::span<const std::uint8_t> bytes_;
  bool swap_;
};

}  // namespace

Volume3D decode_nifti1(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderSize) throw FormatError("NIfTI header truncated", bytes.size());

  bool swap = false;
  if (Reader(bytes, false).i32(0) != 348) {
    if (Reader(bytes, true).i32(0) != 348) throw FormatError("NIfTI sizeof_hdr is not 348", 0);
    swap = true;
  }
  const Reader r(bytes, swap);

  if (std::memcmp(bytes.data() + 344, "n+1\0", 4) != 0) {
    throw FormatError("NIfTI magic is not \"n+1\" (only single-file .nii is supported)", 344);
  }

  const std::int16_t ndim = r.i16(40);
  if (ndim < 3 || ndim > 7) throw FormatError("NIfTI dim[0] must be in [3, 7]", 40);
  for (int a = 4; a <= ndim; ++a) {
    if (r.i16(40 + 2 * a) != 1) throw FormatError("NIfTI volumes beyond 3D are not supported", 40 + 2 * a);
  }
  const int nx = r.i16(42), ny = r.i16(44), nz = r.i16(46);
  if (nx <= 0 || ny <= 0 || nz <= 0) throw FormatError("NIfTI dims must be positive", 42);

  const std::int16_t datatype = r.i16(70);
  std::size_t item = 0;
  if (datatype == kDtInt16) {
    item = 2;
  } else if (datatype == kDtFloat32) {
    item = 4;
  } else {
    throw FormatError("unsupported NIfTI datatype " + std::to_string(datatype), 70);
  }

  const float vox_offset = r.f32(108);
  if (!(vox_offset >= 348.0f)) throw FormatError("NIfTI vox_offset below header size", 108);
  const auto offset = static_cast<std::size_t>(vox_offset);
  const float slope = r.f32(112);
  const float inter = r.f32(116);

  const Dims dims{nx, ny, nz};
  const std::size_t need = offset + item * dims.count();
  if (bytes.size() < need) throw FormatError("NIfTI payload truncated", bytes.size());

  std::vector<float> data(dims.count());
  const bool scale = slope != 0.0f && std::isfinite(slope);
  // NIfTI stores x fastest; Volume3D stores the third axis fastest.
  std::size_t src = 0;
  for (int z = 0; z < nz; ++z)
    for (int y = 0; y < ny; ++y)
      for (int x = 0; x < nx; ++x, ++src) {
        const std::size_t at = offset + item * src;
        float v = item == 2 ? static_cast<float>(r.i16(at)) : r.f32(at);
        if (scale) v = v * slope + inter;
        if (std::isnan(v)) throw FormatError("NaN voxel value", at);
        data[dims.index(x, y, z)] = v;
      }

  Spacing spacing{r.f32(80), r.f32(84), r.f32(88)};
  return Volume3D(dims, std::move(data), spacing);
}

}  // namespace h2lo
