#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace setdist {

// Error taxonomy shared by all modules.
struct InputError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct UsageError : std::logic_error {
  using std::logic_error::logic_error;
};
struct ResourceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ParseError : std::runtime_error {
  ParseError(const std::string& msg, std::size_t line_no)
      : std::runtime_error(msg + " (line " + std::to_string(line_no) + ")"),
        line(line_no) {}
  std::size_t line;
};

enum class Metric { L1, L2, Linf };

Metric metric_from_string(const std::string& s);
std::string to_string(Metric m);

enum class Pooling { Sum, Max };

Pooling pooling_from_string(const std::string& s);
std::string to_string(Pooling pooling);

// Distance between two points under the chosen norm.
double ground_dist(Metric metric, std::span<const double> x,
                   std::span<const double> y);

// Dense row-major matrix, just enough for cost matrices and plans.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

// Axis-aligned bounding box for the point domain.
struct DomainBox {
  std::vector<double> lo;
  std::vector<double> hi;

  DomainBox() = default;
  DomainBox(std::vector<double> lo_, std::vector<double> hi_);
  static DomainBox cube(std::size_t dim, double lo, double hi);

  std::size_t dim() const { return lo.size(); }
  double diameter(Metric metric) const;
  bool contains(std::span<const double> x, double tol = 1e-9) const;
};

// Deterministic 64-bit generator. All draws go through explicit
// bit-to-double conversions so streams are reproducible everywhere,
// independent of the standard library's distribution implementations.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : seed_(seed), gen_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0,1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Unbiased integer in [0,n) by rejection.
  std::uint64_t below(std::uint64_t n);

  // Standard normal via Box-Muller (pairs cached).
  double normal();

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Finite weighted point set: n points of shared dimension d with
// nonnegative weights summing to one. Weights are renormalized on
// construction when their sum is within 1e-9 of one.
class WeightedPointSet {
 public:
  static constexpr double kWeightSumTol = 1e-9;

  WeightedPointSet(std::vector<double> coords, std::size_t dim,
                   std::vector<double> weights);

  // Uniform weights 1/n.
  static WeightedPointSet uniform(std::vector<double> coords, std::size_t dim);
  // Single point with weight 1.
  static WeightedPointSet single(std::vector<double> point);
  // Skips the weight-sum check and renormalization. Needed by the
  // max-pooling sketch decoder whose weights intentionally sum to < 1.
  static WeightedPointSet unnormalized(std::vector<double> coords,
                                       std::size_t dim,
                                       std::vector<double> weights);

  std::size_t size() const { return weights_.size(); }
  std::size_t dim() const { return dim_; }
  std::span<const double> point(std::size_t i) const {
    return {coords_.data() + i * dim_, dim_};
  }
  double weight(std::size_t i) const { return weights_[i]; }
  double weight_sum() const;
  const std::vector<double>& coords() const { return coords_; }
  const std::vector<double>& weights() const { return weights_; }

  // Indices of points with weight > 0.
  std::vector<std::size_t> support() const;

  // Lexicographic argsort of the stored points (ties broken by weight,
  // then by index); used for order-independent accumulation.
  std::vector<std::size_t> canonical_order() const;

  // Returns a set with storage order permuted; same multiset.
  WeightedPointSet permuted(const std::vector<std::size_t>& perm) const;

 private:
  WeightedPointSet() = default;
  std::vector<double> coords_;
  std::size_t dim_ = 0;
  std::vector<double> weights_;
};

// Pairwise ground distances, entry (i,j) = d(P_i, Q_j).
Matrix distance_matrix(const WeightedPointSet& P, const WeightedPointSet& Q,
                       Metric metric);

// Appends copies of the first point at weight zero until the set has
// target_size atoms. Leaves every transport distance unchanged.
WeightedPointSet pad_with_zero_weight(const WeightedPointSet& S,
                                      std::size_t target_size);

}  // namespace setdist
