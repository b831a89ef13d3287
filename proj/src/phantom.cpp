#include "h2lo/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "h2lo/error.hpp"

namespace h2lo {

void PhantomSpec::validate() const {
  if (!dims.positive()) throw DataError("phantom dims must be positive");
  const double levels[3] = {outer_level, mid_level, core_level};
  for (double l : levels)
    if (!(l > 0.0 && l <= 1.0)) throw DataError("phantom tissue levels must lie in (0, 1]");
  if (outer_level == mid_level || mid_level == core_level || outer_level == core_level) {
    throw DataError("phantom tissue levels must be distinct");
  }
  if (intensity_jitter < 0.0 || axis_jitter < 0.0 || center_jitter < 0.0) throw DataError("jitters must be >= 0");
  if (!(mid_scale > core_scale && core_scale > 0.0 && mid_scale < 1.0)) {
    throw DataError("phantom shells must nest: 0 < core_scale < mid_scale < 1");
  }
}

void DegradationSpec::validate() const {
  if (remap.size() < 2) throw DataError("remap needs at least two control points");
  for (std::size_t n = 1; n < remap.size(); ++n)
    if (!(remap[n].first > remap[n - 1].first)) throw DataError("remap control points must be increasing in HF");
  if (blur_sigma < 0.0 || noise_sigma < 0.0) throw DataError("degradation sigmas must be >= 0");
}

double DegradationSpec::apply_remap(double u) const {
  if (u <= remap.front().first) return remap.front().second;
  if (u >= remap.back().first) return remap.back().second;
  const auto hi = std::upper_bound(remap.begin(), remap.end(), u,
                                   [](double x, const std::pair<double, double>& p) { return x < p.first; });
  const auto lo = hi - 1;
  const double t = (u - lo->first) / (hi->first - lo->first);
  return lo->second + t * (hi->second - lo->second);
}

bool DegradationSpec::remap_is_monotone() const {
  for (std::size_t n = 1; n < remap.size(); ++n)
    if (remap[n].second < remap[n - 1].second) return false;
  return true;
}

Volume3D gen_hf_phantom(const PhantomSpec& spec, Rng& rng) {
  spec.validate();
  std::array<double, 3> center, outer;
  for (int a = 0; a < 3; ++a) {
    center[a] = rng.uniform(-spec.center_jitter, spec.center_jitter);
    outer[a] = spec.outer_axes[a] * (1.0 + rng.uniform(-spec.axis_jitter, spec.axis_jitter));
  }
  std::array<double, 3> mid, core, core_center;
  for (int a = 0; a < 3; ++a) {
    mid[a] = outer[a] * spec.mid_scale * (1.0 + rng.uniform(-spec.axis_jitter, spec.axis_jitter) * 0.5);
    core[a] = outer[a] * spec.core_scale * (1.0 + rng.uniform(-spec.axis_jitter, spec.axis_jitter));
    core_center[a] = center[a] + rng.uniform(-spec.center_jitter, spec.center_jitter) * 0.5;
  }
  const auto jitter = [&](double level) {
    return std::clamp(level + rng.uniform(-spec.intensity_jitter, spec.intensity_jitter), 0.01, 1.0);
  };
  const double outer_v = jitter(spec.outer_level);
  const double mid_v = jitter(spec.mid_level);
  const double core_v = jitter(spec.core_level);

  const auto inside = [](const std::array<double, 3>& x, const std::array<double, 3>& c,
                         const std::array<double, 3>& ax) {
    double s = 0.0;
    for (int a = 0; a < 3; ++a) s += (x[a] - c[a]) * (x[a] - c[a]) / (ax[a] * ax[a]);
    return s <= 1.0;
  };

  const CoordGrid grid(spec.dims);
  Volume3D out(spec.dims);
  for (int i = 0; i < spec.dims.h; ++i)
    for (int j = 0; j < spec.dims.w; ++j)
      for (int k = 0; k < spec.dims.d; ++k) {
        const auto x = grid.at(i, j, k);
        double v = 0.0;
        if (inside(x, core_center, core)) {
          v = core_v;
        } else if (inside(x, center, mid)) {
          v = mid_v;
        } else if (inside(x, center, outer)) {
          v = outer_v;
        }
        out.at(i, j, k) = static_cast<float>(v);
      }
  return out;
}

Volume3D degrade(const Volume3D& hf, const DegradationSpec& dspec, Rng& rng) {
  dspec.validate();
  Volume3D remapped(hf.dims());
  for (std::size_t n = 0; n < hf.size(); ++n) remapped[n] = static_cast<float>(dspec.apply_remap(hf[n]));
  Volume3D out = gaussian_blur(remapped, dspec.blur_sigma);
  for (std::size_t n = 0; n < out.size(); ++n) {
    double v = out[n];
    if (dspec.noise_sigma > 0.0) v += dspec.noise_sigma * rng.normal();
    out[n] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  out.set_spacing(hf.spacing());
  return out;
}

Split make_split(int n, int n_val, int n_test) {
  if (n < 1 || n_val < 0 || n_test < 0 || n_val + n_test >= n) {
    throw DataError("split needs at least one training subject");
  }
  Split s;
  const int n_train = n - n_val - n_test;
  for (int i = 0; i < n; ++i) (i < n_train ? s.train : (i < n_train + n_val ? s.val : s.test)).push_back(i);
  return s;
}

Subject gen_subject(int index, const PhantomSpec& spec, const DegradationSpec& dspec, std::uint64_t dataset_seed) {
  Subject s;
  s.index = index;
  s.seed = derive_seed(dataset_seed, static_cast<std::uint64_t>(index));
  Rng geometry(derive_seed(s.seed, 1));
  Rng noise(derive_seed(s.seed, 2));
  s.hf = max_normalize(gen_hf_phantom(spec, geometry));
  s.lf = max_normalize(degrade(s.hf, dspec, noise));
  return s;
}

Dataset gen_dataset(int n_subjects, const PhantomSpec& spec, const DegradationSpec& dspec, std::uint64_t seed,
                    Split split) {
  if (n_subjects < 1) throw DataError("gen_dataset: need at least one subject");
  Dataset ds{seed, spec, dspec, std::move(split), {}};
  for (int i = 0; i < n_subjects; ++i) ds.subjects.push_back(gen_subject(i, spec, dspec, seed));
  return ds;
}

nlohmann::json to_json(const PhantomSpec& s) {
  return {{"dims", {s.dims.h, s.dims.w, s.dims.d}},
          {"outer_level", s.outer_level},
          {"mid_level", s.mid_level},
          {"core_level", s.core_level},
          {"intensity_jitter", s.intensity_jitter},
          {"outer_axes", s.outer_axes},
          {"mid_scale", s.mid_scale},
          {"core_scale", s.core_scale},
          {"axis_jitter", s.axis_jitter},
          {"center_jitter", s.center_jitter}};
}

nlohmann::json to_json(const DegradationSpec& s) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& [x, y] : s.remap) pts.push_back({x, y});
  return {{"remap", pts}, {"blur_sigma", s.blur_sigma}, {"noise_sigma", s.noise_sigma}};
}

PhantomSpec phantom_spec_from_json(const nlohmann::json& j, PhantomSpec s) {
  if (j.contains("dims")) {
    const auto d = j["dims"].get<std::vector<int>>();
    if (d.size() != 3) throw DataError("phantom dims must have 3 entries");
    s.dims = {d[0], d[1], d[2]};
  }
  s.outer_level = j.value("outer_level", s.outer_level);
  s.mid_level = j.value("mid_level", s.mid_level);
  s.core_level = j.value("core_level", s.core_level);
  s.intensity_jitter = j.value("intensity_jitter", s.intensity_jitter);
  if (j.contains("outer_axes")) s.outer_axes = j["outer_axes"].get<std::array<double, 3>>();
  s.mid_scale = j.value("mid_scale", s.mid_scale);
  s.core_scale = j.value("core_scale", s.core_scale);
  s.axis_jitter = j.value("axis_jitter", s.axis_jitter);
  s.center_jitter = j.value("center_jitter", s.center_jitter);
  s.validate();
  return s;
}

DegradationSpec degradation_spec_from_json(const nlohmann::json& j, DegradationSpec s) {
  if (j.contains("remap")) {
    s.remap.clear();
    for (const auto& p : j["remap"]) s.remap.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
  }
  s.blur_sigma = j.value("blur_sigma", s.blur_sigma);
  s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
  s.validate();
  return s;
}

namespace {

nlohmann::json split_json(const Split& s) { return {{"train", s.train}, {"val", s.val}, {"test", s.test}}; }

Split split_from_json(const nlohmann::json& j) {
  return {j.at("train").get<std::vector<int>>(), j.at("val").get<std::vector<int>>(),
          j.at("test").get<std::vector<int>>()};
}

std::string subject_name(int index, const char* kind) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "subject_%03d_%s.vol", index, kind);
  return buf;
}

}  // namespace

nlohmann::json write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json m;
  m["format"] = "h2lo-phantom-dataset";
  m["version"] = 1;
  m["seed"] = ds.seed;
  m["n_subjects"] = ds.subjects.size();
  m["phantom"] = to_json(ds.phantom);
  m["degradation"] = to_json(ds.degradation);
  m["split"] = split_json(ds.split);
  m["subjects"] = nlohmann::json::array();
  for (const Subject& s : ds.subjects) {
    const std::string hf = subject_name(s.index, "hf"), lf = subject_name(s.index, "lf");
    save_volume(s.hf, dir / hf);
    save_volume(s.lf, dir / lf);
    m["subjects"].push_back({{"index", s.index}, {"seed", s.seed}, {"hf", hf}, {"lf", lf}});
  }
  std::ofstream(dir / "manifest.json") << m.dump(2) << "\n";
  return m;
}

Dataset read_dataset(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw DataError("cannot open dataset manifest " + manifest_path.string());
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(in);
    Dataset ds;
    ds.seed = m.at("seed").get<std::uint64_t>();
    ds.phantom = phantom_spec_from_json(m.at("phantom"));
    ds.degradation = degradation_spec_from_json(m.at("degradation"));
    ds.split = split_from_json(m.at("split"));
    const auto dir = manifest_path.parent_path();
    for (const auto& s : m.at("subjects")) {
      ds.subjects.push_back({s.at("index").get<int>(), s.at("seed").get<std::uint64_t>(),
                             load_volume(dir / s.at("hf").get<std::string>()),
                             load_volume(dir / s.at("lf").get<std::string>())});
    }
    return ds;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed dataset manifest " + manifest_path.string() + ": " + e.what());
  }
}

Dataset regenerate_from_manifest(const nlohmann::json& m) {
  try {
    const auto spec = phantom_spec_from_json(m.at("phantom"));
    const auto dspec = degradation_spec_from_json(m.at("degradation"));
    return gen_dataset(m.at("n_subjects").get<int>(), spec, dspec, m.at("seed").get<std::uint64_t>(),
                       split_from_json(m.at("split")));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed dataset manifest: ") + e.what());
  }
}

}  // namespace h2lo
