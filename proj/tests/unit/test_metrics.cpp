#include <cmath>

#include "doctest.h"
#include "h2lo/error.hpp"
#include "h2lo/metrics.hpp"
#include "../support.hpp"

using namespace h2lo;

TEST_CASE("metrics agree with brute-force oracles") {
  Rng rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    const Volume3D p = oracle::random_volume({8, 8, 8}, rng);
    const Volume3D q = oracle::random_volume({8, 8, 8}, rng);
    const Volume3D hf = oracle::random_volume({8, 8, 8}, rng);
    CHECK(oracle::rel_err(psnr(p, q), oracle::psnr(p, q)) < 1e-9);
    CHECK(oracle::rel_err(ssim3d(p, q), oracle::ssim(p, q)) < 1e-9);
    CHECK(oracle::rel_err(ncc(p, q), oracle::ncc(p, q)) < 1e-9);

    const auto mask = foreground_mask(hf, 0.2);
    const auto hp = foreground_histogram(p, mask, 32), hq = foreground_histogram(q, mask, 32);
    const auto op = oracle::histogram(p, hf, 0.2, 32), oq = oracle::histogram(q, hf, 0.2, 32);
    CHECK(hp.p == op);
    CHECK(oracle::rel_err(wasserstein1(hp, hq), oracle::wasserstein(op, oq)) < 1e-9);
    CHECK(oracle::rel_err(hncc(hp, hq), oracle::hncc(op, oq)) < 1e-9);
    CHECK(oracle::rel_err(bhattacharyya(hp, hq), oracle::bhattacharyya(op, oq)) < 1e-9);
    CHECK(oracle::rel_err(js_divergence(hp, hq), oracle::js(op, oq)) < 1e-9);
  }
}

TEST_CASE("perfect pair scores") {
  Rng rng(2);
  const Volume3D v = oracle::random_volume({9, 8, 7}, rng);
  const MetricsReport r = evaluate_pair(v, v, v);
  CHECK(std::isinf(r.psnr));
  CHECK(r.ssim_pct == 100.0);
  CHECK(r.ncc == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(r.wass == 0.0);
  CHECK(r.hncc == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(r.bhat == 0.0);
  CHECK(r.js == 0.0);
  CHECK(to_json(r)["psnr"].get<double>() == kPsnrCap);
}

TEST_CASE("SSIM of constant volumes is exactly one") {
  const Volume3D c({5, 5, 5}, 0.3f);
  CHECK(ssim3d(c, c) == 1.0);
}

TEST_CASE("histogram edges") {
  const std::vector<double> v{0.0, 1.0, 1.0, 0.5, -0.2, 1.3};
  const Histogram h = histogram_of(v, 4);
  CHECK(h.p[0] == doctest::Approx(2.0 / 6));
  CHECK(h.p[2] == doctest::Approx(1.0 / 6));
  CHECK(h.p[3] == doctest::Approx(3.0 / 6));
  double s = 0.0;
  for (double x : h.p) s += x;
  CHECK(s == doctest::Approx(1.0));
  CHECK_THROWS_AS(histogram_of({}, 4), DataError);
}

TEST_CASE("histogram distances: symmetry, bounds and disjoint supports") {
  const Histogram a = histogram_of({0.05, 0.1}, 10);
  const Histogram b = histogram_of({0.95, 0.99}, 10);
  CHECK(js_divergence(a, b) == doctest::Approx(1.0));
  CHECK(bhattacharyya(a, b) == kBhattacharyyaCap);
  // half the mass moves 9 bins, half 8
  CHECK(wasserstein1(a, b) == doctest::Approx(0.85));
  CHECK(wasserstein1(a, b) == wasserstein1(b, a));
  CHECK_THROWS_AS(wasserstein1(a, histogram_of({0.5}, 5)), DataError);
}

TEST_CASE("ncc rejects constant input") {
  const Volume3D c({3, 3, 3}, 0.5f);
  Rng rng(1);
  CHECK_THROWS_AS(ncc(c, oracle::random_volume({3, 3, 3}, rng)), DataError);
}

TEST_CASE("psnr value") {
  Volume3D a({2, 2, 2}, 0.5f), b({2, 2, 2}, 0.6f);
  CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-6));
}

TEST_CASE("report serialization order and summary") {
  MetricsReport r;
  r.pred_id = "p";
  r.ref_id = "r";
  r.psnr = INFINITY;
  r.ssim_pct = 50;
  r.ncc = 0.5;
  r.wass = 0.25;
  r.hncc = 0.75;
  r.bhat = 0.125;
  r.js = 0.0625;
  CHECK(metrics_csv_header() == "pred,ref,psnr,ssim,ncc,wass,hncc,bhat,js");
  CHECK(to_csv_row(r) == "p,r,100,50,0.5,0.25,0.75,0.125,0.0625");
  MetricsReport r2 = r;
  r2.psnr = 90;
  r2.ncc = 0.7;
  const auto s = summarize({r, r2});
  CHECK(s.mean.psnr == doctest::Approx(95));
  CHECK(s.stddev.psnr == doctest::Approx(std::sqrt(50.0)));
  CHECK(s.mean.ncc == doctest::Approx(0.6));
  CHECK(to_csv_summary_row(s, "ours").rfind("ours,mean±std,95±", 0) == 0);
}
