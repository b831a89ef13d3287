#include <cmath>
#include <numbers>

#include "doctest.h"
#include "h2lo/error.hpp"
#include "h2lo/optim.hpp"

using namespace h2lo;

TEST_CASE("adam first steps match the hand-computed update") {
  Tensor<double> p({3}, std::vector<double>{1.0, -2.0, 0.5});
  p.grad = {0.5, -0.25, 0.0};
  AdamState st;
  std::vector<Tensor<double>*> ps{&p};
  adam_step<double>(ps, st, 0.1);
  // m_hat = g, v_hat = g^2 after one step
  CHECK(p.values[0] == doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8)));
  CHECK(p.values[1] == doctest::Approx(-2.0 + 0.1 * 0.25 / (0.25 + 1e-8)));
  CHECK(p.values[2] == 0.5);
  CHECK(st.t == 1);

  p.grad = {0.5, -0.25, 0.0};
  adam_step<double>(ps, st, 0.1);
  // constant gradient keeps m_hat = g, v_hat = g^2
  CHECK(p.values[0] == doctest::Approx(1.0 - 0.2).epsilon(1e-6));

  // second step oracle with a changing gradient
  Tensor<double> q({1}, std::vector<double>{0.0});
  AdamState s2;
  std::vector<Tensor<double>*> qs{&q};
  q.grad = {1.0};
  adam_step<double>(qs, s2, 1.0);
  q.grad = {-3.0};
  const double before = q.values[0];
  adam_step<double>(qs, s2, 1.0);
  const double m = 0.9 * 0.1 * 1.0 + 0.1 * -3.0;
  const double v = 0.999 * 0.001 * 1.0 + 0.001 * 9.0;
  const double mh = m / (1 - 0.81), vh = v / (1 - 0.999 * 0.999);
  CHECK(q.values[0] == doctest::Approx(before - mh / (std::sqrt(vh) + 1e-8)).epsilon(1e-6));
}

TEST_CASE("adam rejects non-finite gradients untouched") {
  Tensor<float> p({2}, std::vector<float>{1.0f, 2.0f});
  p.grad = {0.1f, NAN};
  AdamState st;
  std::vector<Tensor<float>*> ps{&p};
  CHECK_THROWS_AS(adam_step<float>(ps, st, 1e-3), NumericalError);
  CHECK(p.values[0] == 1.0f);
  CHECK(st.t == 0);
}

TEST_CASE("cosine schedule") {
  const LrSchedule s;
  CHECK(cosine_lr(0, s) == doctest::Approx(1e-4));
  CHECK(cosine_lr(499, s) == doctest::Approx(1e-6));
  CHECK(cosine_lr(0, s) == 1e-4);
  const double mid = 1e-6 + 0.5 * (1e-4 - 1e-6) * (1 + std::cos(std::numbers::pi * 100 / 499.0));
  CHECK(cosine_lr(100, s) == doctest::Approx(mid));
  for (int e = 1; e < 500; ++e) CHECK(cosine_lr(e, s) <= cosine_lr(e - 1, s));
  CHECK(cosine_lr(0, {1e-3, 1e-5, 1}) == 1e-3);
  CHECK_THROWS_AS(cosine_lr(500, s), DataError);
  CHECK_THROWS_AS(cosine_lr(-1, s), DataError);
}

TEST_CASE("grad_check detects a wrong gradient") {
  std::vector<double> x{1.0, 2.0};
  const auto f = [&] { return x[0] * x[0] + 3 * x[1]; };
  const std::vector<double> good{2.0, 3.0}, bad{2.0, 3.1};
  CHECK(grad_check(f, x, good).max_rel_error < 1e-8);
  const auto r = grad_check(f, x, bad);
  CHECK(r.worst_index == 1);
  CHECK(r.max_rel_error > 0.01);
  CHECK(x[0] == 1.0);
}
