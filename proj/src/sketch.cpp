#include "setdist/sketch.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "setdist/ot.hpp"

namespace setdist::sketch {

namespace {

// Per-axis spacing keeping a grid cell's circumradius within delta0.
double cell_spacing(double delta0, std::size_t dim, Metric metric) {
  switch (metric) {
    case Metric::L2: return 2.0 * delta0 / std::sqrt(static_cast<double>(dim));
    case Metric::L1: return 2.0 * delta0 / static_cast<double>(dim);
    case Metric::Linf: return 2.0 * delta0;
  }
  throw InputError("invalid metric enum");
}

}  // namespace

CoveringNet build_covering_net(const DomainBox& box, double delta0,
                               Metric metric, std::size_t max_centers) {
  if (!(delta0 > 0.0)) throw InputError("build_covering_net: delta0 must be > 0");
  const std::size_t d = box.dim();
  const double spacing = cell_spacing(delta0, d, metric);
  std::vector<std::size_t> counts(d);
  std::size_t total = 1;
  for (std::size_t j = 0; j < d; ++j) {
    counts[j] = static_cast<std::size_t>(
        std::max(1.0, std::ceil((box.hi[j] - box.lo[j]) / spacing)));
    if (counts[j] > max_centers || total > max_centers / counts[j])
      throw ResourceError("build_covering_net: center count exceeds cap");
    total *= counts[j];
  }
  CoveringNet net;
  net.dim = d;
  net.radius = delta0;
  net.box = box;
  net.metric = metric;
  net.centers.reserve(total * d);
  std::vector<std::size_t> idx(d, 0);
  while (true) {
    for (std::size_t j = 0; j < d; ++j) {
      const double w = (box.hi[j] - box.lo[j]) / static_cast<double>(counts[j]);
      net.centers.push_back(box.lo[j] + (static_cast<double>(idx[j]) + 0.5) * w);
    }
    std::size_t axis = d;
    while (true) {
      if (axis == 0) return net;
      --axis;
      if (++idx[axis] < counts[axis]) break;
      idx[axis] = 0;
      if (axis == 0) return net;
    }
  }
}

double choose_sharpness(double delta0, int p, std::size_t a, double d_max) {
  if (!(delta0 > 0.0) || !(d_max > 0.0) || a < 1 || p < 1)
    throw InputError("choose_sharpness: inputs must be positive");
  if (!(delta0 < d_max))
    throw InputError("choose_sharpness: requires delta0 < d_max");
  const double log_threshold =
      static_cast<double>(p) * std::log(delta0 / d_max) -
      std::log(static_cast<double>(a));
  if (log_threshold >= 0.0)
    throw InputError("choose_sharpness: threshold >= 1, inequality vacuous");
  return 1.01 * (-log_threshold) / delta0;
}

SketchConfig make_sum_config(const DomainBox& box, double delta, int p,
                             Metric metric, std::size_t max_centers) {
  if (!(delta > 0.0)) throw InputError("make_sum_config: delta must be > 0");
  if (p < 1) throw InputError("make_sum_config: p must be >= 1");
  SketchConfig cfg;
  cfg.delta = delta;
  cfg.p = p;
  cfg.delta0 = 0.5 * std::pow(delta / 2.0, 1.0 / p);
  cfg.net = build_covering_net(box, cfg.delta0, metric, max_centers);
  cfg.d_max = box.diameter(metric);
  cfg.sharpness = choose_sharpness(cfg.delta0, p, cfg.net.size(), cfg.d_max);
  return cfg;
}

SketchConfig make_max_config(const DomainBox& box, double delta, Metric metric,
                             std::size_t max_centers) {
  if (!(delta > 0.0)) throw InputError("make_max_config: delta must be > 0");
  SketchConfig cfg;
  cfg.delta = delta;
  cfg.p = 1;
  cfg.delta0 = delta;
  cfg.net = build_covering_net(box, cfg.delta0, metric, max_centers);
  cfg.d_max = box.diameter(metric);
  cfg.sharpness = choose_sharpness(cfg.delta0, 1, cfg.net.size(), cfg.d_max);
  return cfg;
}

std::vector<double> soft_indicator(std::span<const double> x,
                                   const SketchConfig& cfg) {
  if (!cfg.net.box.contains(x))
    throw InputError("soft_indicator: point outside the domain box");
  const std::size_t a = cfg.net.size();
  std::vector<double> h(a);
  for (std::size_t i = 0; i < a; ++i) {
    const double d = ground_dist(cfg.net.metric, x, cfg.net.center(i));
    h[i] = std::exp(-cfg.sharpness * std::max(0.0, d - cfg.delta0));
  }
  return h;
}

std::vector<double> encode(const WeightedPointSet& S, const SketchConfig& cfg,
                           Pooling mode) {
  if (S.dim() != cfg.net.dim)
    throw InputError("encode: dimension mismatch with the net");
  const std::size_t a = cfg.net.size();
  std::vector<double> out(a, 0.0);
  if (mode == Pooling::Sum) {
    for (const std::size_t i : S.canonical_order()) {
      const double w = S.weight(i);
      if (w == 0.0) continue;
      const std::vector<double> h = soft_indicator(S.point(i), cfg);
      const double norm = std::accumulate(h.begin(), h.end(), 0.0);
      for (std::size_t k = 0; k < a; ++k) out[k] += w * h[k] / norm;
    }
  } else {
    for (std::size_t i = 0; i < S.size(); ++i) {
      const std::vector<double> h = soft_indicator(S.point(i), cfg);
      for (std::size_t k = 0; k < a; ++k) out[k] = std::max(out[k], h[k]);
    }
  }
  return out;
}

WeightedPointSet decode(std::span<const double> v, const SketchConfig& cfg,
                        Pooling mode) {
  const std::size_t a = cfg.net.size();
  if (v.size() != a) throw InputError("decode: vector length != net size");
  double norm = 0.0;
  for (const double x : v) {
    if (!(x >= 0.0)) throw InputError("decode: vector must be nonnegative");
    norm += x;
  }
  if (!(norm > 0.0)) throw InputError("decode: all-zero vector");
  if (mode == Pooling::Sum) {
    std::vector<double> weights(v.begin(), v.end());
    for (double& w : weights) w /= norm;
    return WeightedPointSet(cfg.net.centers, cfg.net.dim, std::move(weights));
  }
  constexpr double kActivation = 1.0 - 1e-9;
  std::vector<double> coords;
  std::vector<double> weights;
  for (std::size_t i = 0; i < a; ++i) {
    if (v[i] < kActivation) continue;
    const auto c = cfg.net.center(i);
    coords.insert(coords.end(), c.begin(), c.end());
    weights.push_back(v[i] / norm);
  }
  if (weights.empty())
    throw InputError("decode: no active component in max mode");
  return WeightedPointSet::unnormalized(std::move(coords), cfg.net.dim,
                                        std::move(weights));
}

double roundtrip_error(const WeightedPointSet& S, const SketchConfig& cfg,
                       Pooling mode) {
  const std::vector<double> v = encode(S, cfg, mode);
  const WeightedPointSet back = decode(v, cfg, mode);
  if (mode == Pooling::Sum)
    return ot::wasserstein_exact(back, S, cfg.p, cfg.net.metric).distance;
  return ot::hausdorff(back, S, cfg.net.metric);
}

}  // namespace setdist::sketch
