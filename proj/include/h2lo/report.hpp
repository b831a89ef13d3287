#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "h2lo/metrics.hpp"
#include "h2lo/volume.hpp"

namespace h2lo {

/// 2D slice of a volume at `index` along `axis` (0 = H, 1 = W, 2 = D), row-major.
struct Slice {
  int rows = 0;
  int cols = 0;
  std::vector<float> values;
};

Slice extract_slice(const Volume3D& v, int axis, int index);
Slice mid_slice(const Volume3D& v, int axis = 0);
Slice abs_difference(const Slice& a, const Slice& b);

/// Binary 8-bit PGM; values are scaled by `gain`, clamped to [0, 1] and rounded.
std::vector<std::uint8_t> encode_pgm(const Slice& s, double gain = 1.0);
void write_pgm(const std::filesystem::path& path, const Slice& s, double gain = 1.0);

struct MethodRow {
  std::string method;
  MetricsSummary summary;
};

/// Comparison table in CSV (one mean±std row per method) and Markdown.
std::string comparison_csv(const std::vector<MethodRow>& rows);
std::string comparison_markdown(const std::vector<MethodRow>& rows);

}  // namespace h2lo
