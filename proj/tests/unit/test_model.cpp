#include <cmath>

#include "doctest.h"
#include "h2lo/error.hpp"
#include "h2lo/model.hpp"
#include "../support.hpp"

using namespace h2lo;

TEST_CASE("default parameter count") {
  const ModelConfig c;
  CHECK(param_count(c) == 581409);
  const H2LOModel<float> m(c, 1);
  CHECK(param_count(m) == 581409);
  CHECK(c.basis_size() == 128);

  ModelConfig relu = c;
  relu.trunk = TrunkKind::ReluMlp;
  CHECK(param_count(relu) == 581409);
}

TEST_CASE("model config validation") {
  ModelConfig c;
  c.kernel_size = 4;
  CHECK_THROWS_AS(c.validate(), DataError);
  c = ModelConfig{};
  c.branch_channels.clear();
  CHECK_THROWS_AS(c.validate(), DataError);
  CHECK(trunk_kind_from_string(to_string(TrunkKind::ReluMlp)) == TrunkKind::ReluMlp);
  CHECK_THROWS(trunk_kind_from_string("tanh"));
}

TEST_CASE("initialization is seed-determined") {
  const auto c = oracle::tiny_config();
  const H2LOModel<float> a(c, 4), b(c, 4), d(c, 5);
  CHECK(a.branch[2].weight.values == b.branch[2].weight.values);
  CHECK(a.trunk[1].weight.values == b.trunk[1].weight.values);
  CHECK(a.branch[2].weight.values != d.branch[2].weight.values);
  CHECK(a.beta.values[0] == 0.0f);
  for (const auto& l : a.branch)
    for (float v : l.bias.values) CHECK(v == 0.0f);
}

TEST_CASE("operator evaluation is the coefficient-basis inner product") {
  const auto c = oracle::tiny_config();
  H2LOModel<double> m(c, 2);
  m.beta.values[0] = 0.125;
  Rng rng(3);
  const Volume3D u = oracle::random_volume({5, 6, 7}, rng);
  const auto field = branch_forward(m, u);
  CHECK(field.channels == 8);
  CHECK(field.dims == u.dims());

  const CoordGrid grid(u.dims());
  const std::vector<Voxel> vox{{0, 0, 0}, {4, 5, 6}, {2, 3, 1}};
  const auto out = operator_eval(m, field, vox, grid);
  const auto coords = voxel_coords<double>(grid, vox);
  const auto basis = trunk_forward(m, coords);
  CHECK(basis.shape == std::vector<int>{3, 8});
  for (std::size_t n = 0; n < vox.size(); ++n) {
    const auto coeff = read_coefficients(field, vox[n]);
    double s = 0.125;
    for (int k = 0; k < 8; ++k) s += coeff[k] * basis.values[n * 8 + k];
    CHECK(out[n] == doctest::Approx(s).epsilon(1e-12));
  }
}

TEST_CASE("branch field of a zero-weight last layer is its bias") {
  auto c = oracle::tiny_config();
  H2LOModel<double> m(c, 2);
  auto& last = m.branch.back();
  std::fill(last.weight.values.begin(), last.weight.values.end(), 0.0);
  for (int k = 0; k < 8; ++k) last.bias.values[k] = 0.1 * k;
  const Volume3D u({3, 3, 3}, 0.5f);
  const auto f = branch_forward(m, u);
  for (int k = 0; k < 8; ++k) CHECK(f.at(k, 13) == doctest::Approx(0.1 * k));
}

TEST_CASE("synthesize_full covers the grid and clamps") {
  const auto c = oracle::tiny_config();
  H2LOModel<float> m(c, 9);
  Rng rng(1);
  const Volume3D u = oracle::random_volume({6, 5, 4}, rng);
  const Volume3D y = synthesize_full(m, u);
  CHECK(y.dims() == u.dims());
  for (float v : y.data()) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }

  H2LOModel<float> shifted = m;
  shifted.beta.values[0] = 5.0f;
  const Volume3D hi = synthesize_full(shifted, u);
  for (float v : hi.data()) CHECK(v == 1.0f);

  // Matches the pointwise operator before clamping.
  const auto field = branch_forward(m, u);
  const CoordGrid grid(u.dims());
  const auto raw = operator_eval(m, field, {{3, 2, 1}}, grid);
  CHECK(y.at(3, 2, 1) == doctest::Approx(std::clamp(raw[0], 0.0f, 1.0f)).epsilon(1e-6));
}

TEST_CASE("synthesize rejects non-finite input") {
  H2LOModel<float> m(oracle::tiny_config(), 1);
  Volume3D u({3, 3, 3}, 0.2f);
  u[4] = NAN;
  CHECK_THROWS_AS(synthesize_full(m, u), DataError);
}
