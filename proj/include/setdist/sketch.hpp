#pragma once

#include "setdist/core.hpp"

namespace setdist::sketch {

// Centers of a grid of metric balls of the given radius covering the
// box. The grid spacing is chosen so each cell's circumradius stays
// within the radius, hence every box point lies within radius of some
// center.
struct CoveringNet {
  std::vector<double> centers;  // a x dim, row-major
  std::size_t dim = 0;
  double radius = 0.0;
  DomainBox box;
  Metric metric = Metric::L2;

  std::size_t size() const { return dim == 0 ? 0 : centers.size() / dim; }
  std::span<const double> center(std::size_t i) const {
    return {centers.data() + i * dim, dim};
  }
};

CoveringNet build_covering_net(const DomainBox& box, double delta0,
                               Metric metric,
                               std::size_t max_centers = 1000000);

// Smallest safe decay constant, with 1% headroom: b0 such that
// exp(-b0*delta0) < delta0^p / (d_max^p * a) strictly.
double choose_sharpness(double delta0, int p, std::size_t a, double d_max);

struct SketchConfig {
  double delta = 0.0;      // target round-trip bound
  int p = 1;
  double delta0 = 0.0;     // net radius
  double sharpness = 0.0;  // b0
  CoveringNet net;
  double d_max = 0.0;      // domain diameter
};

// Constructive sum-pooling sketch: net radius delta0 = (delta/2)^(1/p)/2.
SketchConfig make_sum_config(const DomainBox& box, double delta, int p,
                             Metric metric, std::size_t max_centers = 1000000);

// Max-pooling (Hausdorff) sketch: the net radius is delta itself. Any
// positive sharpness yields the same decoded support; the sum-mode
// constant is reused so inactive components stay clearly below the
// activation threshold.
SketchConfig make_max_config(const DomainBox& box, double delta, Metric metric,
                             std::size_t max_centers = 1000000);

// Component i = exp(-b0 * max(0, d(x, y_i) - delta0)); equals 1 exactly
// for every center whose ball contains x.
std::vector<double> soft_indicator(std::span<const double> x,
                                   const SketchConfig& cfg);

// Sum mode: sum_i w_i * h(x_i)/||h(x_i)||_1, accumulated in canonical
// point order so the result is permutation invariant bit-for-bit.
// Max mode: componentwise max of the raw indicators over all points.
std::vector<double> encode(const WeightedPointSet& S, const SketchConfig& cfg,
                           Pooling mode);

// Sum mode: all centers, weights v_i/||v||_1. Max mode: centers with
// v_i >= 1 - 1e-9, weights v_i/||v||_1 over the full vector (mass on
// inactive components is dropped, as the construction prescribes).
WeightedPointSet decode(std::span<const double> v, const SketchConfig& cfg,
                        Pooling mode);

// Sum mode: W_p(decode(encode(S)), S). Max mode: Hausdorff distance
// between the decoded support and S.
double roundtrip_error(const WeightedPointSet& S, const SketchConfig& cfg,
                       Pooling mode);

}  // namespace setdist::sketch
