#include "setdist/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace setdist {

Metric metric_from_string(const std::string& s) {
  if (s == "l1" || s == "L1") return Metric::L1;
  if (s == "l2" || s == "L2") return Metric::L2;
  if (s == "linf" || s == "Linf" || s == "LINF") return Metric::Linf;
  throw InputError("unknown metric: " + s);
}

Pooling pooling_from_string(const std::string& s) {
  if (s == "sum") return Pooling::Sum;
  if (s == "max") return Pooling::Max;
  throw InputError("unknown pooling mode: " + s);
}

std::string to_string(Pooling pooling) {
  return pooling == Pooling::Sum ? "sum" : "max";
}

std::string to_string(Metric m) {
  switch (m) {
    case Metric::L1: return "l1";
    case Metric::L2: return "l2";
    case Metric::Linf: return "linf";
  }
  throw InputError("invalid metric enum");
}

double ground_dist(Metric metric, std::span<const double> x,
                   std::span<const double> y) {
  if (x.size() != y.size() || x.empty())
    throw InputError("ground_dist: dimension mismatch");
  switch (metric) {
    case Metric::L1: {
      double s = 0.0;
      for (std::size_t k = 0; k < x.size(); ++k) s += std::abs(x[k] - y[k]);
      return s;
    }
    case Metric::L2: {
      double s = 0.0;
      for (std::size_t k = 0; k < x.size(); ++k) {
        const double d = x[k] - y[k];
        s += d * d;
      }
      return std::sqrt(s);
    }
    case Metric::Linf: {
      double s = 0.0;
      for (std::size_t k = 0; k < x.size(); ++k)
        s = std::max(s, std::abs(x[k] - y[k]));
      return s;
    }
  }
  throw InputError("invalid metric enum");
}

DomainBox::DomainBox(std::vector<double> lo_, std::vector<double> hi_)
    : lo(std::move(lo_)), hi(std::move(hi_)) {
  if (lo.size() != hi.size() || lo.empty())
    throw InputError("DomainBox: lo/hi dimension mismatch");
  for (std::size_t j = 0; j < lo.size(); ++j) {
    if (!std::isfinite(lo[j]) || !std::isfinite(hi[j]) || !(lo[j] < hi[j]))
      throw InputError("DomainBox: requires lo[j] < hi[j] and finite bounds");
  }
}

DomainBox DomainBox::cube(std::size_t dim, double lo, double hi) {
  return DomainBox(std::vector<double>(dim, lo), std::vector<double>(dim, hi));
}

double DomainBox::diameter(Metric metric) const {
  std::vector<double> extent(dim());
  for (std::size_t j = 0; j < dim(); ++j) extent[j] = hi[j] - lo[j];
  std::vector<double> zero(dim(), 0.0);
  return ground_dist(metric, extent, zero);
}

bool DomainBox::contains(std::span<const double> x, double tol) const {
  if (x.size() != dim()) return false;
  for (std::size_t j = 0; j < dim(); ++j)
    if (x[j] < lo[j] - tol || x[j] > hi[j] + tol) return false;
  return true;
}

std::uint64_t SeededRng::below(std::uint64_t n) {
  if (n == 0) throw InputError("SeededRng::below: n must be positive");
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t v = next_u64();
  while (v >= limit) v = next_u64();
  return v % n;
}

double SeededRng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform01();
  while (u1 <= 0.0) u1 = uniform01();
  const double u2 = uniform01();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * M_PI * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

namespace {

void validate_geometry(const std::vector<double>& coords, std::size_t dim,
                       const std::vector<double>& weights) {
  if (dim == 0) throw InputError("WeightedPointSet: dimension must be >= 1");
  if (weights.empty()) throw InputError("WeightedPointSet: needs >= 1 point");
  if (coords.size() != weights.size() * dim)
    throw InputError("WeightedPointSet: coords size != n * dim");
  for (double c : coords)
    if (!std::isfinite(c))
      throw InputError("WeightedPointSet: non-finite coordinate");
  for (double w : weights)
    if (!(w >= 0.0) || !std::isfinite(w))
      throw InputError("WeightedPointSet: weights must be nonnegative");
}

}  // namespace

WeightedPointSet::WeightedPointSet(std::vector<double> coords, std::size_t dim,
                                   std::vector<double> weights) {
  validate_geometry(coords, dim, weights);
  double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (std::abs(sum - 1.0) > kWeightSumTol)
    throw InputError("WeightedPointSet: weights sum to " +
                     std::to_string(sum) + ", expected 1");
  if (sum != 1.0)
    for (double& w : weights) w /= sum;
  coords_ = std::move(coords);
  dim_ = dim;
  weights_ = std::move(weights);
}

WeightedPointSet WeightedPointSet::uniform(std::vector<double> coords,
                                           std::size_t dim) {
  if (dim == 0 || coords.size() % dim != 0 || coords.empty())
    throw InputError("WeightedPointSet::uniform: bad coords/dim");
  const std::size_t n = coords.size() / dim;
  return WeightedPointSet(std::move(coords), dim,
                          std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

WeightedPointSet WeightedPointSet::single(std::vector<double> point) {
  const std::size_t d = point.size();
  return WeightedPointSet(std::move(point), d, {1.0});
}

WeightedPointSet WeightedPointSet::unnormalized(std::vector<double> coords,
                                                std::size_t dim,
                                                std::vector<double> weights) {
  validate_geometry(coords, dim, weights);
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(sum > 0.0))
    throw InputError("WeightedPointSet::unnormalized: total weight is zero");
  WeightedPointSet s;
  s.coords_ = std::move(coords);
  s.dim_ = dim;
  s.weights_ = std::move(weights);
  return s;
}

double WeightedPointSet::weight_sum() const {
  return std::accumulate(weights_.begin(), weights_.end(), 0.0);
}

std::vector<std::size_t> WeightedPointSet::support() const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < size(); ++i)
    if (weights_[i] > 0.0) idx.push_back(i);
  return idx;
}

std::vector<std::size_t> WeightedPointSet::canonical_order() const {
  std::vector<std::size_t> idx(size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const auto pa = point(a), pb = point(b);
    for (std::size_t k = 0; k < dim_; ++k) {
      if (pa[k] < pb[k]) return true;
      if (pa[k] > pb[k]) return false;
    }
    if (weights_[a] != weights_[b]) return weights_[a] < weights_[b];
    return a < b;
  });
  return idx;
}

WeightedPointSet WeightedPointSet::permuted(
    const std::vector<std::size_t>& perm) const {
  if (perm.size() != size())
    throw InputError("WeightedPointSet::permuted: bad permutation size");
  std::vector<double> coords(coords_.size());
  std::vector<double> weights(size());
  for (std::size_t i = 0; i < size(); ++i) {
    const auto p = point(perm[i]);
    std::copy(p.begin(), p.end(), coords.begin() + i * dim_);
    weights[i] = weights_[perm[i]];
  }
  WeightedPointSet s;
  s.coords_ = std::move(coords);
  s.dim_ = dim_;
  s.weights_ = std::move(weights);
  return s;
}

Matrix distance_matrix(const WeightedPointSet& P, const WeightedPointSet& Q,
                       Metric metric) {
  if (P.dim() != Q.dim())
    throw InputError("distance_matrix: dimension mismatch");
  Matrix D(P.size(), Q.size());
  for (std::size_t i = 0; i < P.size(); ++i)
    for (std::size_t j = 0; j < Q.size(); ++j)
      D(i, j) = ground_dist(metric, P.point(i), Q.point(j));
  return D;
}

WeightedPointSet pad_with_zero_weight(const WeightedPointSet& S,
                                      std::size_t target_size) {
  if (target_size < S.size())
    throw InputError("pad_with_zero_weight: target_size < |S|");
  if (target_size == S.size()) return S;
  std::vector<double> coords = S.coords();
  std::vector<double> weights = S.weights();
  const auto first = S.point(0);
  for (std::size_t i = S.size(); i < target_size; ++i) {
    coords.insert(coords.end(), first.begin(), first.end());
    weights.push_back(0.0);
  }
  return WeightedPointSet(std::move(coords), S.dim(), std::move(weights));
}

}  // namespace setdist
