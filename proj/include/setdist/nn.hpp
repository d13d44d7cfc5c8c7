#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "setdist/core.hpp"

namespace setdist::nn {

// Fully-connected network shape: LeakyReLU between layers, optional
// LeakyReLU on the output.
struct MlpSpec {
  std::size_t input_dim = 1;
  std::size_t output_dim = 1;
  std::vector<std::size_t> hidden_widths;
  double leaky_slope = 0.01;
  bool final_leaky = false;

  std::vector<std::size_t> widths() const;
  std::size_t layer_count() const { return hidden_widths.size() + 1; }
  std::size_t param_count() const;
  void validate() const;

  bool operator==(const MlpSpec&) const = default;
};

// Flat parameter vector with per-layer (weight matrix, bias) views.
// Layer l stores the out x in weight row-major, then the bias.
class ParamStore {
 public:
  explicit ParamStore(MlpSpec spec);

  const MlpSpec& spec() const { return spec_; }
  std::size_t param_count() const { return data_.size(); }
  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }

  std::size_t fan_in(std::size_t layer) const { return widths_[layer]; }
  std::size_t fan_out(std::size_t layer) const { return widths_[layer + 1]; }
  std::span<double> weight(std::size_t layer);
  std::span<const double> weight(std::size_t layer) const;
  std::span<double> bias(std::size_t layer);
  std::span<const double> bias(std::size_t layer) const;

 private:
  MlpSpec spec_;
  std::vector<std::size_t> widths_;
  std::vector<std::size_t> offsets_;  // start of each layer's block
  std::vector<double> data_;
};

// Uniform(-sqrt(6/fan_in), +sqrt(6/fan_in)) weights, zero biases.
ParamStore mlp_init(const MlpSpec& spec, SeededRng& rng);

// Plain forward pass without recording.
std::vector<double> mlp_forward(const ParamStore& params,
                                std::span<const double> x);

// 17-significant-digit decimal round-trip helpers used by every
// checkpoint and dataset writer.
std::string format_double(double v);
double parse_double(const std::string& s);

// Checkpoint payload for one network: {"spec": ..., "params": [...]}
// with parameters as decimal strings.
std::string params_to_json_string(const ParamStore& p);
ParamStore params_from_json_string(const std::string& text);

// Reverse-mode tape over vector-valued nodes. Parameters live in the
// bound stores; gradients accumulate into one flat vector aligned with
// the store order. Nodes are appended in topological order, so the
// backward sweep is a single reverse pass.
class Tape {
 public:
  explicit Tape(std::vector<ParamStore*> stores);

  // --- graph construction (returns node ids) ---
  int constant(std::vector<double> v);
  // MLP application, activations cached for the backward pass.
  int mlp(std::size_t store, int input);
  // Pooled point encoder: sum mode computes sum_i w_i * h(x_i) (zero
  // weights skipped so padding is a bit-exact no-op); max mode takes
  // the componentwise max of h over all points, ignoring weights. With
  // weight_as_feature the weight is appended to the point before h.
  int set_encode(std::size_t store, const WeightedPointSet& S, Pooling pooling,
                 bool weight_as_feature, bool canonical_order);
  int add(int a, int b);
  int abs_scalar(int a);
  // Euclidean distance between two equal-length vectors (scalar node).
  int l2_diff(int a, int b);
  // Mean of squared residuals against fixed labels (scalar node).
  int mse(const std::vector<int>& predictions,
          const std::vector<double>& labels);
  // Linear combination of scalar nodes (scalar node).
  int weighted_sum_scalars(const std::vector<int>& xs,
                           const std::vector<double>& coeffs);
  // Cost matrix ||u_i - y_j||^p between a points node (rows*dim flat)
  // and a fixed point set (L2 ground metric).
  int pairwise_cost(int points, std::size_t rows, std::size_t dim,
                    const WeightedPointSet& other, int p);
  // Same within one points node (rows x rows).
  int pairwise_cost_self(int points, std::size_t rows, std::size_t dim, int p);
  // One log-domain potential update each; log weights are fixed.
  int sinkhorn_f_update(int cost, std::size_t rows, std::size_t cols, int g,
                        std::vector<double> log_b, double epsilon);
  int sinkhorn_g_update(int cost, std::size_t rows, std::size_t cols, int f,
                        std::vector<double> log_a, double epsilon);
  // <f,a> + <g,b> (scalar node).
  int entropic_dual(int f, int g, std::vector<double> a, std::vector<double> b);

  const std::vector<double>& value(int node) const;
  double scalar(int node) const;

  // Seeds the scalar output with 1 and sweeps the graph once in
  // reverse topological order.
  void backward(int node);

  std::span<const double> param_grad() const { return param_grad_; }
  std::span<const double> param_grad(std::size_t store) const;
  std::size_t total_params() const { return param_grad_.size(); }

  // Smallest |pre-activation| (LeakyReLU), |abs input|, L2 norm or
  // W1-cost distance encountered, for kink-aware finite differencing.
  double min_kink_margin() const { return kink_margin_; }

  void reset();

 private:
  struct Node;
  int push(Node&& n);
  void forward_mlp(std::size_t store, std::span<const double> in,
                   std::span<double> cache) const;
  void backward_mlp(std::size_t store, std::span<const double> in,
                    std::span<const double> cache, std::span<const double> out_adj,
                    std::span<double> in_adj);
  static std::size_t mlp_cache_size(const MlpSpec& spec);

  std::vector<ParamStore*> stores_;
  std::vector<std::size_t> store_offsets_;
  std::vector<double> param_grad_;
  std::vector<Node> nodes_;
  double kink_margin_ = 0.0;
};

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_hat = 1e-8;
};

// First/second moment accumulators, zero at step 0.
struct AdamState {
  explicit AdamState(std::size_t n, AdamConfig cfg = {})
      : m(n, 0.0), v(n, 0.0), config(cfg) {}
  std::vector<double> m, v;
  std::size_t step_count = 0;
  AdamConfig config;
};

// Bias-corrected Adam update in place. NaN gradients are refused.
void adam_step(AdamState& state, std::span<double> params,
               std::span<const double> grads);

}  // namespace setdist::nn
