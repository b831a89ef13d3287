#include <filesystem>

#include "doctest.h"
#include "h2lo/error.hpp"
#include "h2lo/phantom.hpp"

using namespace h2lo;

namespace {

PhantomSpec small_spec() {
  PhantomSpec s;
  s.dims = {20, 18, 22};
  return s;
}

}  // namespace

TEST_CASE("phantom generation is seeded and normalized") {
  const Subject a = gen_subject(2, small_spec(), {}, 42);
  const Subject b = gen_subject(2, small_spec(), {}, 42);
  const Subject c = gen_subject(3, small_spec(), {}, 42);
  CHECK(a.hf == b.hf);
  CHECK(a.lf == b.lf);
  CHECK_FALSE(a.hf == c.hf);
  CHECK(a.hf.max_value() == 1.0f);
  CHECK(a.lf.max_value() == 1.0f);
  for (float v : a.lf.data()) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
  CHECK(a.hf.at(0, 0, 0) == 0.0f);
}

TEST_CASE("phantom has three tissue levels plus background") {
  Rng g(1);
  const Volume3D hf = gen_hf_phantom(small_spec(), g);
  std::vector<float> levels;
  for (float v : hf.data())
    if (std::find(levels.begin(), levels.end(), v) == levels.end()) levels.push_back(v);
  CHECK(levels.size() == 4);
}

TEST_CASE("default degradation swaps tissue ranks beyond the noise") {
  const DegradationSpec d;
  CHECK_FALSE(d.remap_is_monotone());
  // u1 = 0.75 (mid tissue region) maps above u2 = 1.0 (core)
  CHECK(d.apply_remap(0.75) > d.apply_remap(1.0) + 2 * d.noise_sigma);
  CHECK(d.apply_remap(0.0) == 0.0);
  CHECK(d.apply_remap(0.4) == doctest::Approx(0.4));
  CHECK(d.apply_remap(2.0) == d.remap.back().second);
}

TEST_CASE("spec validation") {
  PhantomSpec s;
  s.mid_level = s.core_level;
  CHECK_THROWS_AS(s.validate(), DataError);
  DegradationSpec d;
  d.remap = {{0.5, 0.1}, {0.2, 0.3}};
  CHECK_THROWS_AS(d.validate(), DataError);
}

TEST_CASE("split and dataset round trip") {
  const Split s = make_split(10, 1, 3);
  CHECK(s.train == std::vector<int>{0, 1, 2, 3, 4, 5});
  CHECK(s.val == std::vector<int>{6});
  CHECK(s.test == std::vector<int>{7, 8, 9});
  CHECK_THROWS_AS(make_split(3, 2, 1), DataError);

  PhantomSpec spec;
  spec.dims = {8, 8, 8};
  const Dataset ds = gen_dataset(3, spec, {}, 5, make_split(3, 1, 1));
  const auto dir = std::filesystem::temp_directory_path() / "h2lo_ds_roundtrip";
  std::filesystem::remove_all(dir);
  const auto manifest = write_dataset(ds, dir);
  const Dataset back = read_dataset(dir / "manifest.json");
  REQUIRE(back.subjects.size() == 3);
  CHECK(back.subjects[1].lf == ds.subjects[1].lf);
  CHECK(back.split.test == ds.split.test);
  const Dataset regen = regenerate_from_manifest(manifest);
  CHECK(regen.subjects[2].hf == ds.subjects[2].hf);
  CHECK(regen.subjects[2].lf == ds.subjects[2].lf);
  std::filesystem::remove_all(dir);
}
