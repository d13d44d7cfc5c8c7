#include <doctest.h>

#include <cmath>
#include <queue>
#include <vector>

#include "setdist/core.hpp"
#include "setdist/ot.hpp"

using namespace setdist;

namespace {

WeightedPointSet random_set(SeededRng& rng, std::size_t n, std::size_t dim,
                            bool rational_weights = false) {
  std::vector<double> coords(n * dim);
  for (double& c : coords) c = rng.uniform(-1, 1);
  if (!rational_weights) return WeightedPointSet::uniform(std::move(coords), dim);
  std::vector<double> w(n);
  double total = 0.0;
  for (double& x : w) {
    x = static_cast<double>(1 + rng.below(8));
    total += x;
  }
  for (double& x : w) x /= total;
  return WeightedPointSet(std::move(coords), dim, std::move(w));
}

void check_plan_feasible(const ot::OtResult& r, double tol = 1e-7) {
  const auto& plan = r.plan.plan;
  for (std::size_t i = 0; i < plan.rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < plan.cols; ++j) {
      CHECK(plan(i, j) >= 0.0);
      s += plan(i, j);
    }
    CHECK(s == doctest::Approx(r.plan.row_marginals[i]).epsilon(0).scale(1).epsilon(tol));
  }
  for (std::size_t j = 0; j < plan.cols; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < plan.rows; ++i) s += plan(i, j);
    CHECK(s == doctest::Approx(r.plan.col_marginals[j]).epsilon(tol));
  }
}

// Optimality certificate from the solver's duals: reduced costs are
// nonnegative everywhere on the support LP and vanish on cells that
// carry mass.
bool verify_complementary_slackness(const WeightedPointSet& P,
                                    const WeightedPointSet& Q, int p,
                                    Metric metric, const ot::OtResult& r,
                                    double tol = 1e-7) {
  for (std::size_t i = 0; i < P.size(); ++i) {
    if (P.weight(i) == 0.0) continue;
    for (std::size_t j = 0; j < Q.size(); ++j) {
      if (Q.weight(j) == 0.0) continue;
      double d = ground_dist(metric, P.point(i), Q.point(j));
      const double c = (p == 1) ? d : std::pow(d, p);
      const double rc = c - r.row_duals[i] - r.col_duals[j];
      if (rc < -tol) return false;
      if (r.plan.plan(i, j) > 1e-13 && std::abs(rc) > tol) return false;
    }
  }
  return true;
}

}  // namespace

TEST_SUITE_BEGIN("ot");

TEST_CASE("wasserstein_exact on pinned instances") {
  SeededRng rng(3);
  auto S = random_set(rng, 4, 2);
  CHECK(ot::wasserstein_exact(S, S, 1, Metric::L2).distance ==
        doctest::Approx(0.0).epsilon(1e-12));
  CHECK(ot::wasserstein_exact(S, S, 2, Metric::L2).distance ==
        doctest::Approx(0.0).epsilon(1e-12));

  auto P = WeightedPointSet::single({0.0});
  auto Q = WeightedPointSet::single({3.0});
  CHECK(ot::wasserstein_exact(P, Q, 2, Metric::L2).distance ==
        doctest::Approx(3.0));

  auto A = WeightedPointSet::uniform({0.0, 1.0}, 1);
  auto B = WeightedPointSet::uniform({0.25, 0.75}, 1);
  CHECK(ot::wasserstein_exact(A, B, 1, Metric::L2).distance ==
        doctest::Approx(0.25));
}

TEST_CASE("bruteforce basics") {
  auto P = WeightedPointSet::single({0.0});
  auto Q = WeightedPointSet::single({2.0});
  CHECK(ot::wasserstein_bruteforce(P, Q, 2, Metric::L2).distance ==
        doctest::Approx(2.0));

  // uniform 2x2: min of the two permutation matchings
  auto A = WeightedPointSet::uniform({0.0, 1.0}, 1);
  auto B = WeightedPointSet::uniform({0.9, 0.1}, 1);
  const double direct = 0.5 * (0.1 + 0.9);
  const double crossed = 0.5 * (0.9 + 0.1) * 1.0;  // same here
  const double expect = std::min(0.5 * (std::abs(0.0 - 0.1) + std::abs(1.0 - 0.9)),
                                 std::min(direct, crossed));
  CHECK(ot::wasserstein_bruteforce(A, B, 1, Metric::L2).distance ==
        doctest::Approx(expect));

  auto big = WeightedPointSet::uniform(std::vector<double>(21, 0.0), 1);
  CHECK_THROWS_AS(ot::wasserstein_bruteforce(big, P, 1, Metric::L2), InputError);
}

TEST_CASE("3x3 instance with fixed weights matches the simplex") {
  auto P = WeightedPointSet({0.0, 0.4, 1.0}, 1, {0.5, 0.3, 0.2});
  auto Q = WeightedPointSet({0.1, 0.6, 0.9}, 1, {0.4, 0.4, 0.2});
  const auto bf = ot::wasserstein_bruteforce(P, Q, 1, Metric::L2);
  const auto ex = ot::wasserstein_exact(P, Q, 1, Metric::L2);
  CHECK(ex.distance == doctest::Approx(bf.distance).epsilon(1e-9));
}

TEST_CASE("exact equals bruteforce on random small instances") {
  SeededRng rng(17);
  for (int t = 0; t < 60; ++t) {
    const std::size_t n = 1 + rng.below(4), m = 1 + rng.below(4);
    const int p = (t % 2) + 1;
    auto P = random_set(rng, n, 2, true);
    auto Q = random_set(rng, m, 2, true);
    const auto ex = ot::wasserstein_exact(P, Q, p, Metric::L2);
    const auto bf = ot::wasserstein_bruteforce(P, Q, p, Metric::L2);
    CHECK(std::abs(ex.distance - bf.distance) < 1e-7);
    check_plan_feasible(ex);
  }
}

TEST_CASE("W_p is a metric on random data") {
  SeededRng rng(29);
  for (int t = 0; t < 40; ++t) {
    auto A = random_set(rng, 2 + rng.below(3), 2, true);
    auto B = random_set(rng, 2 + rng.below(3), 2, true);
    auto Cs = random_set(rng, 2 + rng.below(3), 2, true);
    const double ab = ot::wasserstein_exact(A, B, 1, Metric::L2).distance;
    const double ba = ot::wasserstein_exact(B, A, 1, Metric::L2).distance;
    const double ac = ot::wasserstein_exact(A, Cs, 1, Metric::L2).distance;
    const double cb = ot::wasserstein_exact(Cs, B, 1, Metric::L2).distance;
    CHECK(std::abs(ab - ba) < 1e-8);
    CHECK(ab <= ac + cb + 1e-7);
  }
}

TEST_CASE("optimal plans satisfy complementary slackness") {
  SeededRng rng(31);
  for (int t = 0; t < 25; ++t) {
    auto P = random_set(rng, 2 + rng.below(5), 3, true);
    auto Q = random_set(rng, 2 + rng.below(5), 3, true);
    const int p = (t % 2) + 1;
    const auto r = ot::wasserstein_exact(P, Q, p, Metric::L2);
    CHECK(verify_complementary_slackness(P, Q, p, Metric::L2, r));
  }
}

TEST_CASE("large instances keep the optimality certificate") {
  // exercises the row-minimum initial basis and the patched-tree pivots
  SeededRng rng(59);
  auto P = random_set(rng, 300, 3, true);
  auto Q = random_set(rng, 260, 3, true);
  const auto r = ot::wasserstein_exact(P, Q, 1, Metric::L2);
  CHECK(verify_complementary_slackness(P, Q, 1, Metric::L2, r));
  check_plan_feasible(r);
  const auto rt = ot::wasserstein_exact(Q, P, 1, Metric::L2);
  CHECK(std::abs(r.distance - rt.distance) < 1e-8);
}

TEST_CASE("sinkhorn approaches the exact distance from above as eps shrinks") {
  SeededRng rng(37);
  auto P = random_set(rng, 6, 2, true);
  auto Q = random_set(rng, 7, 2, true);
  const double exact = ot::wasserstein_exact(P, Q, 1, Metric::L2).distance;
  double prev = std::numeric_limits<double>::infinity();
  for (const double eps : {1.0, 0.3, 0.1, 0.03, 0.01}) {
    ot::SinkhornConfig cfg{.epsilon = eps, .max_iters = 50000,
                           .marginal_tol = 1e-10};
    const auto r = ot::sinkhorn(P, Q, 1, Metric::L2, cfg);
    CHECK(r.converged);
    CHECK(r.distance >= exact - 1e-8);
    CHECK(r.distance <= prev + 1e-6);
    check_plan_feasible(r);
    prev = r.distance;
  }
  ot::SinkhornConfig tight{.epsilon = 0.01, .max_iters = 50000,
                           .marginal_tol = 1e-10};
  CHECK(ot::sinkhorn(P, Q, 1, Metric::L2, tight).distance ==
        doctest::Approx(exact).epsilon(0.05));
}

TEST_CASE("sinkhorn on the interleaved pair lands near 0.25") {
  auto A = WeightedPointSet::uniform({0.0, 1.0}, 1);
  auto B = WeightedPointSet::uniform({0.25, 0.75}, 1);
  ot::SinkhornConfig cfg{.epsilon = 0.01, .max_iters = 20000,
                         .marginal_tol = 1e-9};
  const auto r = ot::sinkhorn(A, B, 1, Metric::L2, cfg);
  CHECK(std::abs(r.distance - 0.25) < 0.05);
}

TEST_CASE("sinkhorn at identical inputs shrinks with eps") {
  SeededRng rng(41);
  auto P = random_set(rng, 5, 2);
  double prev = std::numeric_limits<double>::infinity();
  for (const double eps : {0.3, 0.1, 0.03}) {
    ot::SinkhornConfig cfg{.epsilon = eps, .max_iters = 20000,
                           .marginal_tol = 1e-9};
    const auto r = ot::sinkhorn(P, P, 1, Metric::L2, cfg);
    CHECK(r.distance >= 0.0);
    CHECK(r.distance <= prev + 1e-9);
    prev = r.distance;
  }
}

TEST_CASE("non-convergence is flagged, not thrown") {
  SeededRng rng(43);
  auto P = random_set(rng, 8, 2);
  auto Q = random_set(rng, 8, 2);
  ot::SinkhornConfig cfg{.epsilon = 0.005, .max_iters = 3,
                         .marginal_tol = 1e-12};
  const auto r = ot::sinkhorn(P, Q, 1, Metric::L2, cfg);
  CHECK_FALSE(r.converged);
  check_plan_feasible(r);  // plan is still projected to the polytope
}

TEST_CASE("sinkhorn_divergence vanishes at P = Q and is symmetric") {
  SeededRng rng(47);
  auto P = random_set(rng, 5, 2, true);
  auto Q = random_set(rng, 6, 2, true);
  ot::SinkhornConfig cfg{.epsilon = 0.1, .max_iters = 20000,
                         .marginal_tol = 1e-10};
  CHECK(std::abs(ot::sinkhorn_divergence(P, P, 1, Metric::L2, cfg)) < 1e-6);
  const double pq = ot::sinkhorn_divergence(P, Q, 1, Metric::L2, cfg);
  const double qp = ot::sinkhorn_divergence(Q, P, 1, Metric::L2, cfg);
  CHECK(pq >= -1e-6);
  CHECK(std::abs(pq - qp) < 1e-8);
}

TEST_CASE("sinkhorn_divergence of separated singletons approaches d^p") {
  auto P = WeightedPointSet::single({0.0});
  auto Q = WeightedPointSet::single({2.0});
  ot::SinkhornConfig cfg{.epsilon = 0.01, .max_iters = 10000,
                         .marginal_tol = 1e-10};
  const double s1 = ot::sinkhorn_divergence(P, Q, 1, Metric::L2, cfg);
  CHECK(s1 == doctest::Approx(2.0).epsilon(1e-4));
  const double s2 = ot::sinkhorn_divergence(P, Q, 2, Metric::L2, cfg);
  CHECK(s2 == doctest::Approx(4.0).epsilon(1e-4));
}

TEST_CASE("hausdorff distance over positive-weight supports") {
  auto P = WeightedPointSet::uniform({0.0, 1.0}, 1);
  auto Q = WeightedPointSet::single({0.0});
  CHECK(ot::hausdorff(P, P, Metric::L2) == 0.0);
  CHECK(ot::hausdorff(P, Q, Metric::L2) == doctest::Approx(1.0));

  // zero-weight point far away changes nothing
  auto Ppad = WeightedPointSet({0.0, 1.0, 50.0}, 1, {0.5, 0.5, 0.0});
  CHECK(ot::hausdorff(Ppad, Q, Metric::L2) == doctest::Approx(1.0));
}

TEST_CASE("hausdorff equals the max of directed distances, recomputed") {
  SeededRng rng(53);
  for (int t = 0; t < 20; ++t) {
    auto P = random_set(rng, 1 + rng.below(6), 2);
    auto Q = random_set(rng, 1 + rng.below(6), 2);
    auto directed = [&](const WeightedPointSet& A, const WeightedPointSet& B) {
      double worst = 0.0;
      for (std::size_t i = 0; i < A.size(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < B.size(); ++j)
          best = std::min(best, ground_dist(Metric::L2, A.point(i), B.point(j)));
        worst = std::max(worst, best);
      }
      return worst;
    };
    const double expect = std::max(directed(P, Q), directed(Q, P));
    CHECK(ot::hausdorff(P, Q, Metric::L2) == doctest::Approx(expect));
  }
}

TEST_SUITE_END();
