#include "h2lo/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "byteio.hpp"
#include "h2lo/error.hpp"

namespace h2lo {

Slice extract_slice(const Volume3D& v, int axis, int index) {
  const Dims d = v.dims();
  const int extent[3] = {d.h, d.w, d.d};
  if (axis < 0 || axis > 2) throw DataError("slice axis must be 0, 1 or 2");
  if (index < 0 || index >= extent[axis]) throw DataError("slice index out of range");
  const int ra = axis == 0 ? 1 : 0, ca = axis == 2 ? 1 : 2;
  Slice s{extent[ra], extent[ca], {}};
  s.values.reserve(static_cast<std::size_t>(s.rows) * s.cols);
  for (int r = 0; r < s.rows; ++r)
    for (int c = 0; c < s.cols; ++c) {
      int p[3];
      p[axis] = index;
      p[ra] = r;
      p[ca] = c;
      s.values.push_back(v.at(p[0], p[1], p[2]));
    }
  return s;
}

Slice mid_slice(const Volume3D& v, int axis) {
  const Dims d = v.dims();
  const int extent[3] = {d.h, d.w, d.d};
  return extract_slice(v, axis, extent[std::clamp(axis, 0, 2)] / 2);
}

Slice abs_difference(const Slice& a, const Slice& b) {
  if (a.rows != b.rows || a.cols != b.cols) throw DataError("slice shapes differ");
  Slice s{a.rows, a.cols, std::vector<float>(a.values.size())};
  for (std::size_t n = 0; n < s.values.size(); ++n) s.values[n] = std::abs(a.values[n] - b.values[n]);
  return s;
}

std::vector<std::uint8_t> encode_pgm(const Slice& s, double gain) {
  const std::string header = "P5\n" + std::to_string(s.cols) + " " + std::to_string(s.rows) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  for (float v : s.values) {
    const double x = std::clamp(static_cast<double>(v) * gain, 0.0, 1.0);
    out.push_back(static_cast<std::uint8_t>(std::lround(x * 255.0)));
  }
  return out;
}

void write_pgm(const std::filesystem::path& path, const Slice& s, double gain) {
  detail::write_file(path, encode_pgm(s, gain));
}

namespace {

std::string cell(double mean, double sd) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f ± %.4f", mean, sd);
  return buf;
}

}  // namespace

std::string comparison_csv(const std::vector<MethodRow>& rows) {
  std::string s = "method,stat,psnr,ssim,ncc,wass,hncc,bhat,js\n";
  for (const MethodRow& r : rows) s += to_csv_summary_row(r.summary, r.method) + "\n";
  return s;
}

std::string comparison_markdown(const std::vector<MethodRow>& rows) {
  std::string s = "| Method | PSNR | SSIM (%) | NCC | WASS | HNCC | BHAT | JS |\n|---|---|---|---|---|---|---|---|\n";
  for (const MethodRow& r : rows) {
    const MetricsReport& m = r.summary.mean;
    const MetricsReport& d = r.summary.stddev;
    s += "| " + r.method + " | " + cell(m.psnr, d.psnr) + " | " + cell(m.ssim_pct, d.ssim_pct) + " | " +
         cell(m.ncc, d.ncc) + " | " + cell(m.wass, d.wass) + " | " + cell(m.hncc, d.hncc) + " | " +
         cell(m.bhat, d.bhat) + " | " + cell(m.js, d.js) + " |\n";
  }
  return s;
}

}  // namespace h2lo
