#include <cmath>

#include "doctest.h"
#include "h2lo/losses.hpp"
#include "h2lo/optim.hpp"
#include "../support.hpp"

using namespace h2lo;

TEST_CASE("derivative kernels match the closed form") {
  const auto K = make_derivative_kernels(1.0, 5);
  CHECK(K.size == 5);
  for (int axis = 0; axis < 3; ++axis) {
    double sum = 0.0;
    for (int a = -2; a <= 2; ++a)
      for (int b = -2; b <= 2; ++b)
        for (int c = -2; c <= 2; ++c) {
          const double v = K.at(static_cast<Axis>(axis), a + 2, b + 2, c + 2);
          CHECK(std::abs(v - static_cast<double>(oracle::derivative_kernel(axis, a, b, c, 1.0L))) < 1e-12);
          sum += v;
        }
    CHECK(std::abs(sum) < 1e-12);
  }
  // Frozen reference values.
  CHECK(K.at(Axis::X, 3, 2, 2) == doctest::Approx(-0.0385108).epsilon(1e-6));
  CHECK(K.at(Axis::X, 4, 2, 2) == doctest::Approx(-0.0171858).epsilon(1e-6));
  CHECK(K.at(Axis::X, 1, 2, 2) == doctest::Approx(0.0385108).epsilon(1e-6));
  CHECK(K.at(Axis::Y, 2, 3, 2) == K.at(Axis::X, 3, 2, 2));
  CHECK(K.at(Axis::Z, 2, 2, 2) == 0.0);
}

TEST_CASE("grad_loss annihilates constants and is symmetric") {
  const auto K = make_derivative_kernels();
  Rng rng(2);
  const Volume3D a = oracle::random_volume({7, 8, 6}, rng);
  // residual is exactly constant when built in double
  std::vector<double> res(a.size(), 0.3);
  CHECK(grad_loss_residual(res, a.dims(), K) == 0.0);
  auto bad = K;
  bad.k[1][3] += 1e-3;
  CHECK_THROWS_AS(grad_loss_residual(res, a.dims(), bad), DataError);

  const Volume3D b = oracle::random_volume({7, 8, 6}, rng);
  CHECK(grad_loss(a, b, K) == doctest::Approx(grad_loss(b, a, K)).epsilon(1e-14));
  CHECK(grad_loss(a, a, K) == 0.0);
  CHECK(grad_loss(a, b, K) > 0.0);
  CHECK_THROWS_AS(grad_loss(oracle::random_volume({4, 8, 8}, rng), oracle::random_volume({4, 8, 8}, rng), K),
                  DataError);
}

TEST_CASE("grad_loss equals the direct valid-region sum") {
  const auto K = make_derivative_kernels();
  Rng rng(4);
  const Dims d{7, 6, 8};
  std::vector<double> r(d.count());
  for (double& v : r) v = rng.uniform(-1, 1);
  double expect = 0.0;
  for (int axis = 0; axis < 3; ++axis)
    for (int i = 2; i < d.h - 2; ++i)
      for (int j = 2; j < d.w - 2; ++j)
        for (int l = 2; l < d.d - 2; ++l) {
          // true convolution: flipped kernel
          double acc = 0.0;
          for (int a = -2; a <= 2; ++a)
            for (int b = -2; b <= 2; ++b)
              for (int c = -2; c <= 2; ++c)
                acc += static_cast<double>(oracle::derivative_kernel(axis, a, b, c, 1.0L)) *
                       r[d.index(i - a, j - b, l - c)];
          expect += acc * acc;
        }
  std::vector<double> g(r.size());
  CHECK(grad_loss_residual(r, d, K, g) == doctest::Approx(expect).epsilon(1e-12));

  const auto f = [&] { return grad_loss_residual(r, d, K); };
  CHECK(grad_check(f, r, g, 1e-6).max_rel_error < 1e-5);
}

TEST_CASE("sampling stays in bounds and is seeded") {
  Rng a(1), b(1);
  const Dims d{5, 6, 7};
  const auto ca = sample_coords(d, 500, a);
  const auto cb = sample_coords(d, 500, b);
  CHECK(ca == cb);
  for (const Voxel& v : ca) CHECK(d.contains(v.i, v.j, v.k));
  for (int n = 0; n < 100; ++n) {
    const Voxel o = sample_subvolume_origin(d, 4, a);
    CHECK(d.contains(o.i + 3, o.j + 3, o.k + 3));
  }
  LossWeights w;
  w.subvol_size = 8;
  CHECK_THROWS_AS(w.validate(d), DataError);
}

TEST_CASE("l1 loss") {
  const std::vector<double> p{0.0, 1.0, 0.5}, t{0.5, 0.0, 0.5};
  CHECK(l1_loss(p, t) == doctest::Approx(0.5));
}

TEST_CASE("total loss terms") {
  const auto c = oracle::tiny_config();
  H2LOModel<double> m(c, 3);
  Rng rng(5);
  const Volume3D hf = oracle::random_volume({8, 8, 8}, rng);
  const Volume3D lf = oracle::random_volume({8, 8, 8}, rng);
  const auto K = make_derivative_kernels();
  LossWeights w;
  w.n_coords = 64;
  w.subvol_size = 6;
  Rng srng(9);
  const LossSample s = draw_loss_sample(hf.dims(), w, srng);

  const LossTerms t1 = total_loss(m, hf, lf, w, s, K, false);
  CHECK(t1.total == doctest::Approx(t1.l1 + t1.grad).epsilon(1e-14));

  // L1 over sampled voxels equals the pointwise operator.
  const auto field = branch_forward(m, hf);
  const auto pred = operator_eval(m, field, s.coords, CoordGrid(hf.dims()));
  double l1 = 0.0;
  for (std::size_t n = 0; n < s.coords.size(); ++n) {
    const Voxel& v = s.coords[n];
    l1 += std::abs(pred[n] - lf.at(v.i, v.j, v.k));
  }
  CHECK(t1.l1 == doctest::Approx(l1 / s.coords.size()).epsilon(1e-12));

  LossWeights w0 = w;
  w0.lambda_grad = 0.0;
  const LossTerms t0 = total_loss(m, hf, lf, w0, s, K, false);
  CHECK(t0.total == t0.l1);
  CHECK(t0.l1 == t1.l1);

  LossWeights w2 = w;
  w2.lambda_grad = 2.5;
  const LossTerms t2 = total_loss(m, hf, lf, w2, s, K, false);
  CHECK(t2.total == doctest::Approx(t1.l1 + 2.5 * t1.grad).epsilon(1e-14));
}

TEST_CASE("total loss gradient, tiny model") {
  auto c = oracle::tiny_config();
  H2LOModel<double> m(c, 3);
  Rng rng(6);
  const Volume3D hf = oracle::random_volume({8, 8, 8}, rng);
  const Volume3D lf = oracle::random_volume({8, 8, 8}, rng);
  const auto K = make_derivative_kernels();
  LossWeights w;
  w.n_coords = 64;
  w.subvol_size = 6;
  w.b_subvols = 2;
  Rng srng(9);
  const LossSample s = draw_loss_sample(hf.dims(), w, srng);
  // Zero biases put some pre-activations exactly on the ReLU kink.
  for (auto& [name, t] : m.named_parameters())
    if (name.find("bias") != std::string::npos)
      for (double& v : t->values) v = rng.uniform(-0.05, 0.05);
  m.zero_grad();
  total_loss(m, hf, lf, w, s, K, true);

  for (auto& [name, t] : m.named_parameters()) {
    // a few entries per tensor
    std::vector<std::size_t> picks;
    for (std::size_t n = 0; n < t->size(); n += std::max<std::size_t>(1, t->size() / 5)) picks.push_back(n);
    for (std::size_t n : picks) {
      const double old = t->values[n];
      t->values[n] = old + 1e-7;
      const double fp = total_loss(m, hf, lf, w, s, K, false).total;
      t->values[n] = old - 1e-7;
      const double fm = total_loss(m, hf, lf, w, s, K, false).total;
      t->values[n] = old;
      const double num = (fp - fm) / 2e-7;
      const double ana = t->grad[n];
      CAPTURE(name);
      CAPTURE(n);
      CHECK(std::abs(num - ana) <= 1e-4 * std::max({std::abs(num), std::abs(ana), 1e-3}));
    }
  }
}
