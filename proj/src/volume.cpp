#include "h2lo/volume.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include "json.hpp"

#include "h2lo/error.hpp"
#include "byteio.hpp"

namespace h2lo {

using detail::get_u32;
using detail::put_u32;
using detail::read_file;

namespace {

constexpr char kRawMagic[8] = {'H', '2', 'L', 'O', 'V', 'O', 'L', '1'};

}  // namespace

std::string to_string(const Dims& d) {
  return std::to_string(d.h) + "x" + std::to_string(d.w) + "x" + std::to_string(d.d);
}

Volume3D::Volume3D(Dims dims, float fill) : dims_(dims) {
  if (!dims.positive()) throw DataError("volume dims must be positive, got " + to_string(dims));
  data_.assign(dims.count(), fill);
}

Volume3D::Volume3D(Dims dims, std::vector<float> data, std::optional<Spacing> spacing)
    : dims_(dims), data_(std::move(data)), spacing_(spacing) {
  if (!dims.positive()) throw DataError("volume dims must be positive, got " + to_string(dims));
  if (data_.size() != dims.count()) {
    throw DataError("volume data length " + std::to_string(data_.size()) + " does not match dims " +
                    to_string(dims));
  }
}

float Volume3D::max_value() const {
  return data_.empty() ? 0.0f : *std::max_element(data_.begin(), data_.end());
}

std::size_t ForegroundMask::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

double CoordGrid::axis_coord(int idx, int n) {
  if (n == 1) return 0.0;
  return -1.0 + 2.0 * static_cast<double>(idx) / static_cast<double>(n - 1);
}

CoordGrid::CoordGrid(Dims dims) : dims_(dims) {
  if (!dims.positive()) throw DataError("coord grid dims must be positive");
  auto fill = [](std::vector<double>& axis, int n) {
    axis.resize(n);
    for (int i = 0; i < n; ++i) axis[i] = axis_coord(i, n);
  };
  fill(x_, dims.h);
  fill(y_, dims.w);
  fill(z_, dims.d);
}

VolumeFormat format_from_path(const std::filesystem::path& path) {
  return path.extension() == ".nii" ? VolumeFormat::Nifti1 : VolumeFormat::RawVol;
}

std::vector<std::uint8_t> encode_raw_volume(const Volume3D& v) {
  nlohmann::ordered_json header;
  header["dims"] = {v.dims().h, v.dims().w, v.dims().d};
  header["dtype"] = "f32";
  header["order"] = "ijk-d-fastest";
  if (v.spacing()) header["spacing"] = *v.spacing();
  const std::string text = header.dump();

  std::vector<std::uint8_t> out;
  out.reserve(12 + text.size() + 4 * v.size());
  out.insert(out.end(), std::begin(kRawMagic), std::end(kRawMagic));
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  for (float f : v.data()) put_u32(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

Volume3D decode_raw_volume(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12) throw FormatError("raw-vol file shorter than fixed header", bytes.size());
  if (!std::equal(std::begin(kRawMagic), std::end(kRawMagic), bytes.begin())) {
    throw FormatError("bad raw-vol magic", 0);
  }
  const std::uint32_t header_len = get_u32(bytes, 8);
  if (bytes.size() < 12 + static_cast<std::size_t>(header_len)) {
    throw FormatError("raw-vol header truncated", bytes.size());
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + header_len);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("raw-vol header is not valid JSON: ") + e.what(), 12);
  }
  Dims dims;
  std::optional<Spacing> spacing;
  try {
    const auto& d = header.at("dims");
    if (!d.is_array() || d.size() != 3) throw FormatError("raw-vol dims must have 3 entries", 12);
    dims = {d[0].get<int>(), d[1].get<int>(), d[2].get<int>()};
    if (header.at("dtype").get<std::string>() != "f32") {
      throw FormatError("unsupported raw-vol dtype " + header["dtype"].dump(), 12);
    }
    if (header.contains("order") && header["order"].get<std::string>() != "ijk-d-fastest") {
      throw FormatError("unsupported raw-vol order " + header["order"].dump(), 12);
    }
    if (header.contains("spacing")) spacing = header["spacing"].get<Spacing>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed raw-vol header: ") + e.what(), 12);
  }
  if (!dims.positive()) throw FormatError("raw-vol dims must be positive", 12);

  const std::size_t payload = 12 + header_len;
  const std::size_t need = payload + 4 * dims.count();
  if (bytes.size() < need) throw FormatError("raw-vol payload truncated", bytes.size());
  if (bytes.size() > need) throw FormatError("trailing bytes after raw-vol payload", need);

  std::vector<float> data(dims.count());
  for (std::size_t n = 0; n < data.size(); ++n) {
    data[n] = std::bit_cast<float>(get_u32(bytes, payload + 4 * n));
    if (std::isnan(data[n])) throw FormatError("NaN voxel value", payload + 4 * n);
  }
  return Volume3D(dims, std::move(data), spacing);
}

Volume3D load_volume(const std::filesystem::path& path, VolumeFormat format) {
  const auto bytes = read_file(path);
  return format == VolumeFormat::Nifti1 ? decode_nifti1(bytes) : decode_raw_volume(bytes);
}

Volume3D load_volume(const std::filesystem::path& path) {
  return load_volume(path, format_from_path(path));
}

void save_volume(const Volume3D& v, const std::filesystem::path& path) {
  const auto bytes = encode_raw_volume(v);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
}

Volume3D max_normalize(const Volume3D& v) {
  require_finite(v, "max_normalize input");
  const float m = v.max_value();
  if (m <= 0.0f) return v;
  Volume3D out = v;
  for (float& x : out.data()) x /= m;
  return out;
}

ForegroundMask foreground_mask(const Volume3D& hf, double threshold) {
  ForegroundMask mask{hf.dims(), std::vector<std::uint8_t>(hf.size())};
  for (std::size_t n = 0; n < hf.size(); ++n) mask.bits[n] = hf[n] > threshold ? 1 : 0;
  return mask;
}

Volume3D crop_subvolume(const Volume3D& v, Voxel origin, Dims size) {
  const Dims& d = v.dims();
  if (!size.positive() || origin.i < 0 || origin.j < 0 || origin.k < 0 ||
      origin.i + size.h > d.h || origin.j + size.w > d.w || origin.k + size.d > d.d) {
    throw DataError("crop of size " + to_string(size) + " at (" + std::to_string(origin.i) + "," +
                    std::to_string(origin.j) + "," + std::to_string(origin.k) +
                    ") exceeds volume " + to_string(d));
  }
  Volume3D out(size);
  for (int i = 0; i < size.h; ++i)
    for (int j = 0; j < size.w; ++j) {
      const float* src = &v.data()[d.index(origin.i + i, origin.j + j, origin.k)];
      std::copy(src, src + size.d, &out.data()[size.index(i, j, 0)]);
    }
  out.set_spacing(v.spacing());
  return out;
}

CoordGrid coord_grid(Dims dims) { return CoordGrid(dims); }

void require_finite(const Volume3D& v, const std::string& what) {
  for (std::size_t n = 0; n < v.size(); ++n) {
    if (!std::isfinite(v[n])) {
      throw DataError(what + ": non-finite value at flat index " + std::to_string(n));
    }
  }
}

Volume3D gaussian_blur(const Volume3D& v, double sigma) {
  if (sigma < 0.0 || !std::isfinite(sigma)) throw DataError("gaussian_blur: sigma must be finite and >= 0");
  if (sigma == 0.0) return v;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> taps(2 * radius + 1);
  double sum = 0.0;
  for (int t = -radius; t <= radius; ++t) sum += taps[t + radius] = std::exp(-0.5 * t * t / (sigma * sigma));
  for (double& t : taps) t /= sum;

  const Dims d = v.dims();
  std::vector<double> cur(v.data().begin(), v.data().end());
  std::vector<double> next(cur.size());
  const int extent[3] = {d.h, d.w, d.d};
  const std::size_t stride[3] = {static_cast<std::size_t>(d.w) * d.d, static_cast<std::size_t>(d.d), 1};
  for (int axis = 0; axis < 3; ++axis) {
    const int n = extent[axis];
    const std::size_t st = stride[axis];
    for (int i = 0; i < d.h; ++i)
      for (int j = 0; j < d.w; ++j)
        for (int k = 0; k < d.d; ++k) {
          const int pos[3] = {i, j, k};
          const std::size_t at = d.index(i, j, k);
          const std::size_t base = at - pos[axis] * st;
          double acc = 0.0;
          for (int t = -radius; t <= radius; ++t) {
            const int p = std::clamp(pos[axis] + t, 0, n - 1);
            acc += taps[t + radius] * cur[base + p * st];
          }
          next[at] = acc;
        }
    std::swap(cur, next);
  }
  Volume3D out(d);
  for (std::size_t n = 0; n < cur.size(); ++n) out[n] = static_cast<float>(cur[n]);
  out.set_spacing(v.spacing());
  return out;
}

}  // namespace h2lo
