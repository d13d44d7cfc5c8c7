#pragma once

#include "setdist/core.hpp"

namespace setdist::ot {

// Coupling between two weighted point sets. Row sums match the first
// set's weights, column sums the second's, within 1e-7.
struct TransportPlan {
  Matrix plan;
  std::vector<double> row_marginals;
  std::vector<double> col_marginals;
};

struct OtResult {
  double distance = 0.0;
  TransportPlan plan;
  std::size_t iterations = 0;
  bool converged = true;
  // LP duals certifying optimality (exact solver only): every cell has
  // cost^p - u_i - v_j >= 0 and basic cells have it equal to zero.
  std::vector<double> row_duals;
  std::vector<double> col_duals;
};

struct SinkhornConfig {
  double epsilon = 0.1;
  std::size_t max_iters = 1000;
  double marginal_tol = 1e-9;

  void validate() const {
    if (!(epsilon > 0.0)) throw InputError("SinkhornConfig: epsilon must be > 0");
    if (max_iters < 1) throw InputError("SinkhornConfig: max_iters must be >= 1");
    if (!(marginal_tol > 0.0))
      throw InputError("SinkhornConfig: marginal_tol must be > 0");
  }
};

// Exact p-Wasserstein distance via the transportation simplex on cost
// D^p. The returned plan is optimal and feasible for the unperturbed
// weights.
OtResult wasserstein_exact(const WeightedPointSet& P, const WeightedPointSet& Q,
                           int p, Metric metric);

// Enumerates every spanning-tree basis of the transportation polytope
// (n*m <= 20) and returns the cheapest nonnegative basic solution.
// Test oracle for wasserstein_exact.
OtResult wasserstein_bruteforce(const WeightedPointSet& P,
                                const WeightedPointSet& Q, int p,
                                Metric metric);

// Log-domain Sinkhorn iterations on cost D^p. Reported distance is the
// sharp transport cost of the entropic plan, <plan, D^p>^{1/p}; the
// plan is projected to exact marginals so it is always feasible.
OtResult sinkhorn(const WeightedPointSet& P, const WeightedPointSet& Q, int p,
                  Metric metric, const SinkhornConfig& cfg);

// Debiased divergence OT_e(P,Q) - (OT_e(P,P) + OT_e(Q,Q))/2 where OT_e
// includes the entropy term (dual objective at convergence). Vanishes
// at P = Q and is nonnegative.
double sinkhorn_divergence(const WeightedPointSet& P, const WeightedPointSet& Q,
                           int p, Metric metric, const SinkhornConfig& cfg);

// Max of the two directed Hausdorff distances over positive-weight
// points; weights are otherwise ignored.
double hausdorff(const WeightedPointSet& P, const WeightedPointSet& Q,
                 Metric metric);

namespace detail {

// Entropic OT dual value <f,a> + <g,b> after exactly `iters` rounds of
// (f-update, g-update) from f = g = 0. Matches the unrolled iterations
// differentiated in the training tape.
double entropic_ot_dual_unrolled(const Matrix& costp,
                                 const std::vector<double>& a,
                                 const std::vector<double>& b, double epsilon,
                                 std::size_t iters);

}  // namespace detail

}  // namespace setdist::ot
