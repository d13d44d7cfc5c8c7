#include <doctest.h>

#include <cmath>

#include "setdist/core.hpp"
#include "setdist/ot.hpp"

using namespace setdist;

TEST_SUITE_BEGIN("core");

TEST_CASE("ground_dist matches the named norms") {
  std::vector<double> a{0.0, 0.0}, b{3.0, 4.0};
  CHECK(ground_dist(Metric::L2, a, b) == doctest::Approx(5.0));
  CHECK(ground_dist(Metric::L2, a, a) == 0.0);
  CHECK(ground_dist(Metric::L1, a, a) == 0.0);
  CHECK(ground_dist(Metric::Linf, b, b) == 0.0);

  std::vector<double> c{1.0, 1.0}, d{0.0, 0.0};
  CHECK(ground_dist(Metric::L1, c, d) == doctest::Approx(2.0));
  CHECK(ground_dist(Metric::Linf, c, d) == doctest::Approx(1.0));

  std::vector<double> e{1.0};
  CHECK_THROWS_AS(ground_dist(Metric::L2, a, e), InputError);
}

TEST_CASE("ground_dist is symmetric and satisfies the triangle inequality") {
  SeededRng rng(7);
  for (const Metric m : {Metric::L1, Metric::L2, Metric::Linf}) {
    for (int t = 0; t < 1000; ++t) {
      std::vector<double> x(3), y(3), z(3);
      for (int k = 0; k < 3; ++k) {
        x[k] = rng.uniform(-5, 5);
        y[k] = rng.uniform(-5, 5);
        z[k] = rng.uniform(-5, 5);
      }
      const double dxy = ground_dist(m, x, y);
      const double dyx = ground_dist(m, y, x);
      const double dxz = ground_dist(m, x, z);
      const double dzy = ground_dist(m, z, y);
      CHECK(dxy == doctest::Approx(dyx).epsilon(1e-12));
      CHECK(dxy <= dxz + dzy + 1e-9);
    }
  }
}

TEST_CASE("distance_matrix entries") {
  auto P0 = WeightedPointSet::single({0.0});
  auto Q0 = WeightedPointSet::single({0.0});
  const Matrix D0 = distance_matrix(P0, Q0, Metric::L2);
  CHECK(D0.rows == 1);
  CHECK(D0.cols == 1);
  CHECK(D0(0, 0) == 0.0);

  auto P = WeightedPointSet::uniform({0.0, 1.0}, 1);
  auto Q = WeightedPointSet::single({2.0});
  const Matrix D = distance_matrix(P, Q, Metric::L2);
  CHECK(D(0, 0) == doctest::Approx(2.0));
  CHECK(D(1, 0) == doctest::Approx(1.0));
}

TEST_CASE("distance_matrix equals pointwise recomputation on random sets") {
  SeededRng rng(11);
  std::vector<double> pc, qc;
  for (int i = 0; i < 4 * 3; ++i) pc.push_back(rng.uniform(-1, 1));
  for (int i = 0; i < 5 * 3; ++i) qc.push_back(rng.uniform(-1, 1));
  auto P = WeightedPointSet::uniform(pc, 3);
  auto Q = WeightedPointSet::uniform(qc, 3);
  const Matrix D = distance_matrix(P, Q, Metric::L2);
  for (std::size_t i = 0; i < P.size(); ++i)
    for (std::size_t j = 0; j < Q.size(); ++j)
      CHECK(D(i, j) == ground_dist(Metric::L2, P.point(i), Q.point(j)));
}

TEST_CASE("weights normalize on construction and stay normalized") {
  std::vector<double> w{0.5 + 3e-10, 0.5};
  auto S = WeightedPointSet({0.0, 1.0}, 1, w);
  CHECK(std::abs(S.weight_sum() - 1.0) < 1e-15);

  // renormalizing an already-normalized set changes nothing
  auto S2 = WeightedPointSet(S.coords(), 1, S.weights());
  for (std::size_t i = 0; i < S.size(); ++i)
    CHECK(S2.weight(i) == S.weight(i));

  CHECK_THROWS_AS(WeightedPointSet({0.0}, 1, {0.9}), InputError);
  CHECK_THROWS_AS(WeightedPointSet({0.0, 1.0}, 1, {1.5, -0.5}), InputError);
}

TEST_CASE("pad_with_zero_weight appends zero-weight copies of the first point") {
  auto S = WeightedPointSet::single({2.5, -1.0});
  auto padded = pad_with_zero_weight(S, 3);
  CHECK(padded.size() == 3);
  CHECK(padded.weight(0) == 1.0);
  CHECK(padded.weight(1) == 0.0);
  CHECK(padded.weight(2) == 0.0);
  CHECK(padded.point(1)[0] == 2.5);
  CHECK(padded.point(2)[1] == -1.0);

  auto same = pad_with_zero_weight(S, 1);
  CHECK(same.size() == 1);

  CHECK_THROWS_AS(pad_with_zero_weight(padded, 2), InputError);
}

TEST_CASE("padding leaves exact and entropic distances unchanged") {
  SeededRng rng(23);
  std::vector<double> pc, qc;
  for (int i = 0; i < 3 * 2; ++i) pc.push_back(rng.uniform(-1, 1));
  for (int i = 0; i < 4 * 2; ++i) qc.push_back(rng.uniform(-1, 1));
  auto P = WeightedPointSet::uniform(pc, 2);
  auto Q = WeightedPointSet::uniform(qc, 2);
  auto Ppad = pad_with_zero_weight(P, P.size() + 2);

  const double w_exact = ot::wasserstein_exact(P, Q, 1, Metric::L2).distance;
  const double w_pad = ot::wasserstein_exact(Ppad, Q, 1, Metric::L2).distance;
  CHECK(w_pad == doctest::Approx(w_exact).epsilon(1e-6));

  const double wp0 = ot::wasserstein_exact(P, Ppad, 1, Metric::L2).distance;
  CHECK(wp0 == doctest::Approx(0.0).epsilon(1e-9));

  ot::SinkhornConfig cfg{.epsilon = 0.1, .max_iters = 2000, .marginal_tol = 1e-9};
  const double s = ot::sinkhorn(P, Q, 1, Metric::L2, cfg).distance;
  const double s_pad = ot::sinkhorn(Ppad, Q, 1, Metric::L2, cfg).distance;
  CHECK(s_pad == doctest::Approx(s).epsilon(1e-6));
}

TEST_CASE("SeededRng reproduces streams and below() stays in range") {
  SeededRng r1(42), r2(42);
  for (int i = 0; i < 100; ++i) CHECK(r1.next_u64() == r2.next_u64());
  SeededRng r3(43);
  for (int i = 0; i < 100; ++i) {
    const double u = r3.uniform01();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(r3.below(10) < 10);
  }
}

TEST_CASE("canonical order sorts points lexicographically") {
  auto S = WeightedPointSet::uniform({1.0, 0.0, -1.0, 2.0, 1.0, -5.0}, 2);
  const auto ord = S.canonical_order();
  CHECK(ord[0] == 1);  // (-1, 2)
  CHECK(ord[1] == 2);  // (1, -5)
  CHECK(ord[2] == 0);  // (1, 0)
}

TEST_SUITE_END();
