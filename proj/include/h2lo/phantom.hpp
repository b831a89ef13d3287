#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "json.hpp"
#include "h2lo/rng.hpp"
#include "h2lo/volume.hpp"

namespace h2lo {

/// Nested-ellipsoid head phantom: background, outer shell, mid shell, core.
struct PhantomSpec {
  Dims dims{48, 48, 48};
  double outer_level = 0.4;
  double mid_level = 0.7;
  double core_level = 1.0;
  double intensity_jitter = 0.03;
  /// Outer ellipsoid semi-axes as fractions of the half-extent.
  std::array<double, 3> outer_axes{0.85, 0.78, 0.9};
  double mid_scale = 0.78;   // mid semi-axes relative to outer
  double core_scale = 0.5;   // core semi-axes relative to outer
  double axis_jitter = 0.06;
  double center_jitter = 0.05;

  void validate() const;
};

/// Ground-truth HF -> LF channel: piecewise-linear remap, blur, additive noise.
struct DegradationSpec {
  /// (hf, lf) control points, strictly increasing in hf. Inputs outside the
  /// range use the nearest end value.
  std::vector<std::pair<double, double>> remap{{0.0, 0.0}, {0.25, 0.3}, {0.55, 0.5}, {0.75, 0.85}, {1.0, 0.55}};
  double blur_sigma = 0.8;
  double noise_sigma = 0.01;

  void validate() const;
  double apply_remap(double u) const;
  bool remap_is_monotone() const;
};

Volume3D gen_hf_phantom(const PhantomSpec& spec, Rng& rng);
Volume3D degrade(const Volume3D& hf, const DegradationSpec& dspec, Rng& rng);

struct Subject {
  int index = 0;
  std::uint64_t seed = 0;
  Volume3D hf;
  Volume3D lf;
};

struct Split {
  std::vector<int> train, val, test;
};

/// Contiguous train / val / test partition of subject indices.
Split make_split(int n_subjects, int n_val, int n_test);

struct Dataset {
  std::uint64_t seed = 0;
  PhantomSpec phantom;
  DegradationSpec degradation;
  Split split;
  std::vector<Subject> subjects;
};

/// Generates n paired (HF, LF) subjects. Both volumes are max-normalized.
/// Subject s uses seed derive_seed(seed, s), so pairs are order-independent.
Dataset gen_dataset(int n_subjects, const PhantomSpec& spec, const DegradationSpec& dspec, std::uint64_t seed,
                    Split split);
Subject gen_subject(int index, const PhantomSpec& spec, const DegradationSpec& dspec, std::uint64_t dataset_seed);

nlohmann::json to_json(const PhantomSpec& s);
nlohmann::json to_json(const DegradationSpec& s);
PhantomSpec phantom_spec_from_json(const nlohmann::json& j, PhantomSpec base = {});
DegradationSpec degradation_spec_from_json(const nlohmann::json& j, DegradationSpec base = {});

/// Writes subject volumes and manifest.json into `dir`.
nlohmann::json write_dataset(const Dataset& ds, const std::filesystem::path& dir);
/// Loads volumes listed in a manifest (paths relative to the manifest).
Dataset read_dataset(const std::filesystem::path& manifest_path);
/// Re-runs generation from the manifest's seeds and specs.
Dataset regenerate_from_manifest(const nlohmann::json& manifest);

}  // namespace h2lo
