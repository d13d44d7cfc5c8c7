#include "setdist/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <numeric>

#include <json.hpp>

namespace setdist::nn {

using json = nlohmann::json;

std::vector<std::size_t> MlpSpec::widths() const {
  std::vector<std::size_t> w;
  w.reserve(hidden_widths.size() + 2);
  w.push_back(input_dim);
  w.insert(w.end(), hidden_widths.begin(), hidden_widths.end());
  w.push_back(output_dim);
  return w;
}

std::size_t MlpSpec::param_count() const {
  const auto w = widths();
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < w.size(); ++l) n += w[l] * w[l + 1] + w[l + 1];
  return n;
}

void MlpSpec::validate() const {
  if (input_dim < 1 || output_dim < 1)
    throw InputError("MlpSpec: dims must be >= 1");
  for (const std::size_t h : hidden_widths)
    if (h < 1) throw InputError("MlpSpec: hidden widths must be >= 1");
  if (!(leaky_slope > 0.0) || !(leaky_slope < 1.0))
    throw InputError("MlpSpec: leaky slope must lie in (0, 1)");
}

ParamStore::ParamStore(MlpSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  widths_ = spec_.widths();
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    offsets_.push_back(off);
    off += widths_[l] * widths_[l + 1] + widths_[l + 1];
  }
  data_.assign(off, 0.0);
}

std::span<double> ParamStore::weight(std::size_t layer) {
  return {data_.data() + offsets_[layer], fan_in(layer) * fan_out(layer)};
}
std::span<const double> ParamStore::weight(std::size_t layer) const {
  return {data_.data() + offsets_[layer], fan_in(layer) * fan_out(layer)};
}
std::span<double> ParamStore::bias(std::size_t layer) {
  return {data_.data() + offsets_[layer] + fan_in(layer) * fan_out(layer),
          fan_out(layer)};
}
std::span<const double> ParamStore::bias(std::size_t layer) const {
  return {data_.data() + offsets_[layer] + fan_in(layer) * fan_out(layer),
          fan_out(layer)};
}

ParamStore mlp_init(const MlpSpec& spec, SeededRng& rng) {
  ParamStore p(spec);
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    const double bound = std::sqrt(6.0 / static_cast<double>(p.fan_in(l)));
    for (double& w : p.weight(l)) w = rng.uniform(-bound, bound);
    // biases stay zero
  }
  return p;
}

namespace {

void affine(std::span<const double> W, std::span<const double> b,
            std::span<const double> x, std::span<double> z) {
  const std::size_t out = b.size(), in = x.size();
  for (std::size_t i = 0; i < out; ++i) {
    double s = b[i];
    const double* row = W.data() + i * in;
    for (std::size_t j = 0; j < in; ++j) s += row[j] * x[j];
    z[i] = s;
  }
}

}  // namespace

std::vector<double> mlp_forward(const ParamStore& params,
                                std::span<const double> x) {
  const MlpSpec& spec = params.spec();
  if (x.size() != spec.input_dim)
    throw InputError("mlp_forward: input dimension mismatch");
  std::vector<double> cur(x.begin(), x.end());
  std::vector<double> next;
  const std::size_t L = spec.layer_count();
  for (std::size_t l = 0; l < L; ++l) {
    next.assign(params.fan_out(l), 0.0);
    affine(params.weight(l), params.bias(l), cur, next);
    const bool activate = (l + 1 < L) || spec.final_leaky;
    if (activate)
      for (double& v : next)
        if (v < 0.0) v *= spec.leaky_slope;
    cur = std::move(next);
  }
  return cur;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0')
    throw InputError("parse_double: malformed number '" + s + "'");
  return v;
}

namespace detail {

json spec_to_json(const MlpSpec& spec) {
  return json{{"input_dim", spec.input_dim},
              {"output_dim", spec.output_dim},
              {"hidden_widths", spec.hidden_widths},
              {"leaky_slope", spec.leaky_slope},
              {"final_leaky", spec.final_leaky}};
}

MlpSpec spec_from_json(const json& j) {
  MlpSpec spec;
  spec.input_dim = j.at("input_dim").get<std::size_t>();
  spec.output_dim = j.at("output_dim").get<std::size_t>();
  spec.hidden_widths = j.at("hidden_widths").get<std::vector<std::size_t>>();
  spec.leaky_slope = j.at("leaky_slope").get<double>();
  spec.final_leaky = j.at("final_leaky").get<bool>();
  spec.validate();
  return spec;
}

json params_to_json(const ParamStore& p) {
  json arr = json::array();
  for (const double v : p.flat()) arr.push_back(format_double(v));
  return json{{"spec", spec_to_json(p.spec())}, {"params", std::move(arr)}};
}

ParamStore params_from_json(const json& j) {
  ParamStore p(spec_from_json(j.at("spec")));
  const auto& arr = j.at("params");
  if (arr.size() != p.param_count())
    throw InputError("checkpoint: parameter count mismatch");
  auto flat = p.flat();
  for (std::size_t k = 0; k < flat.size(); ++k)
    flat[k] = parse_double(arr[k].get<std::string>());
  return p;
}

}  // namespace detail

std::string params_to_json_string(const ParamStore& p) {
  return detail::params_to_json(p).dump();
}

ParamStore params_from_json_string(const std::string& text) {
  return detail::params_from_json(json::parse(text));
}

// ---------------------------------------------------------------- tape

struct Tape::Node {
  enum class Kind {
    Const,
    Mlp,
    SetEncode,
    Add,
    AbsScalar,
    L2Diff,
    Mse,
    WSum,
    PairCost,
    PairCostSelf,
    SinkF,
    SinkG,
    Dual,
  };
  Kind kind = Kind::Const;
  int a = -1, b = -1;
  std::vector<int> ins;
  std::vector<double> value;
  std::vector<double> grad;
  std::size_t store = static_cast<std::size_t>(-1);
  std::vector<double> cache;           // activations / distances
  std::vector<double> aux;             // labels, coeffs, log weights, coords
  std::vector<double> aux2;            // weights / second vector
  std::vector<std::uint32_t> members;  // contributing point indices
  std::vector<std::uint32_t> argmax;   // max-pooling routing
  double eps = 0.0;
  std::size_t rows = 0, cols = 0, dim = 0;
  int p = 1;
  Pooling pooling = Pooling::Sum;
  bool weight_feature = false;
};

Tape::Tape(std::vector<ParamStore*> stores) : stores_(std::move(stores)) {
  std::size_t total = 0;
  for (const ParamStore* s : stores_) {
    store_offsets_.push_back(total);
    total += s->param_count();
  }
  param_grad_.assign(total, 0.0);
  kink_margin_ = std::numeric_limits<double>::infinity();
}

void Tape::reset() {
  nodes_.clear();
  std::fill(param_grad_.begin(), param_grad_.end(), 0.0);
  kink_margin_ = std::numeric_limits<double>::infinity();
}

int Tape::push(Node&& n) {
  n.grad.assign(n.value.size(), 0.0);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

const std::vector<double>& Tape::value(int node) const {
  return nodes_.at(node).value;
}

double Tape::scalar(int node) const {
  const auto& v = nodes_.at(node).value;
  if (v.size() != 1) throw UsageError("Tape::scalar: node is not scalar");
  return v[0];
}

std::span<const double> Tape::param_grad(std::size_t store) const {
  return {param_grad_.data() + store_offsets_[store],
          stores_[store]->param_count()};
}

std::size_t Tape::mlp_cache_size(const MlpSpec& spec) {
  const auto w = spec.widths();
  std::size_t n = 0;
  for (std::size_t l = 1; l < w.size(); ++l) n += 2 * w[l];
  return n;
}

// cache layout per application: [z_0, act_0, z_1, act_1, ...]
void Tape::forward_mlp(std::size_t store, std::span<const double> in,
                       std::span<double> cache) {
  const ParamStore& ps = *stores_[store];
  const MlpSpec& spec = ps.spec();
  const std::size_t L = spec.layer_count();
  std::span<const double> cur = in;
  std::size_t off = 0;
  for (std::size_t l = 0; l < L; ++l) {
    const std::size_t out = ps.fan_out(l);
    auto z = cache.subspan(off, out);
    affine(ps.weight(l), ps.bias(l), cur, z);
    auto act = cache.subspan(off + out, out);
    const bool activate = (l + 1 < L) || spec.final_leaky;
    for (std::size_t i = 0; i < out; ++i) {
      if (activate) {
        kink_margin_ = std::min(kink_margin_, std::abs(z[i]));
        act[i] = z[i] > 0.0 ? z[i] : spec.leaky_slope * z[i];
      } else {
        act[i] = z[i];
      }
    }
    cur = act;
    off += 2 * out;
  }
}

void Tape::backward_mlp(std::size_t store, std::span<const double> in,
                        std::span<const double> cache,
                        std::span<const double> out_adj,
                        std::span<double> in_adj) {
  const ParamStore& ps = *stores_[store];
  const MlpSpec& spec = ps.spec();
  const std::size_t L = spec.layer_count();
  double* gbase = param_grad_.data() + store_offsets_[store];

  std::vector<double> delta(out_adj.begin(), out_adj.end());
  std::vector<double> next_delta;
  // offsets of each layer's cache block
  std::vector<std::size_t> offs(L);
  std::size_t off = 0;
  for (std::size_t l = 0; l < L; ++l) {
    offs[l] = off;
    off += 2 * ps.fan_out(l);
  }
  for (std::size_t l = L; l-- > 0;) {
    const std::size_t out = ps.fan_out(l);
    const std::size_t fin = ps.fan_in(l);
    const bool activate = (l + 1 < L) || spec.final_leaky;
    const double* z = cache.data() + offs[l];
    if (activate)
      for (std::size_t i = 0; i < out; ++i)
        if (z[i] <= 0.0) delta[i] *= spec.leaky_slope;
    std::span<const double> prev =
        (l == 0) ? in : cache.subspan(offs[l - 1] + ps.fan_out(l - 1),
                                      ps.fan_out(l - 1));
    // parameter gradients: layer block is weights then bias
    const std::size_t woff =
        static_cast<std::size_t>(ps.weight(l).data() - ps.flat().data());
    double* gW = gbase + woff;
    double* gb = gW + fin * out;
    for (std::size_t i = 0; i < out; ++i) {
      const double d = delta[i];
      if (d == 0.0) continue;
      double* grow = gW + i * fin;
      for (std::size_t j = 0; j < fin; ++j) grow[j] += d * prev[j];
      gb[i] += d;
    }
    if (l == 0 && in_adj.empty()) break;
    next_delta.assign(fin, 0.0);
    const auto W = ps.weight(l);
    for (std::size_t i = 0; i < out; ++i) {
      const double d = delta[i];
      if (d == 0.0) continue;
      const double* row = W.data() + i * fin;
      for (std::size_t j = 0; j < fin; ++j) next_delta[j] += d * row[j];
    }
    delta = next_delta;
  }
  if (!in_adj.empty())
    for (std::size_t j = 0; j < in_adj.size(); ++j) in_adj[j] += delta[j];
}

int Tape::constant(std::vector<double> v) {
  Node n;
  n.kind = Node::Kind::Const;
  n.value = std::move(v);
  return push(std::move(n));
}

int Tape::mlp(std::size_t store, int input) {
  const ParamStore& ps = *stores_.at(store);
  const auto& x = value(input);
  if (x.size() != ps.spec().input_dim)
    throw InputError("Tape::mlp: input dimension mismatch");
  Node n;
  n.kind = Node::Kind::Mlp;
  n.store = store;
  n.a = input;
  n.cache.assign(mlp_cache_size(ps.spec()), 0.0);
  forward_mlp(store, x, n.cache);
  const std::size_t out = ps.spec().output_dim;
  n.value.assign(n.cache.end() - out, n.cache.end());
  return push(std::move(n));
}

int Tape::set_encode(std::size_t store, const WeightedPointSet& S,
                     Pooling pooling, bool weight_as_feature,
                     bool canonical_order) {
  const ParamStore& ps = *stores_.at(store);
  const MlpSpec& spec = ps.spec();
  const std::size_t in_dim = S.dim() + (weight_as_feature ? 1 : 0);
  if (in_dim != spec.input_dim)
    throw InputError("Tape::set_encode: point dimension mismatch");
  Node n;
  n.kind = Node::Kind::SetEncode;
  n.store = store;
  n.pooling = pooling;
  n.weight_feature = weight_as_feature;
  n.dim = in_dim;

  std::vector<std::size_t> order;
  if (canonical_order) {
    order = S.canonical_order();
  } else {
    order.resize(S.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
  }
  for (const std::size_t i : order) {
    if (pooling == Pooling::Sum && S.weight(i) == 0.0) continue;
    n.members.push_back(static_cast<std::uint32_t>(i));
  }
  const std::size_t cache_per = mlp_cache_size(spec);
  const std::size_t stride = in_dim + cache_per;
  n.cache.assign(n.members.size() * stride, 0.0);
  const std::size_t out = spec.output_dim;
  n.value.assign(out, pooling == Pooling::Sum
                          ? 0.0
                          : -std::numeric_limits<double>::infinity());
  if (pooling == Pooling::Max) n.argmax.assign(out, 0);
  n.aux2.reserve(n.members.size());
  for (std::size_t k = 0; k < n.members.size(); ++k) {
    const std::size_t i = n.members[k];
    double* slot = n.cache.data() + k * stride;
    const auto pt = S.point(i);
    std::copy(pt.begin(), pt.end(), slot);
    if (weight_as_feature) slot[S.dim()] = S.weight(i);
    n.aux2.push_back(S.weight(i));
    std::span<double> cache{slot + in_dim, cache_per};
    forward_mlp(store, {slot, in_dim}, cache);
    const double* y = cache.data() + cache_per - out;
    if (pooling == Pooling::Sum) {
      const double w = S.weight(i);
      for (std::size_t c = 0; c < out; ++c) n.value[c] += w * y[c];
    } else {
      for (std::size_t c = 0; c < out; ++c) {
        if (y[c] > n.value[c]) {
          n.value[c] = y[c];
          n.argmax[c] = static_cast<std::uint32_t>(k);
        }
      }
    }
  }
  if (n.members.empty())
    throw InputError("Tape::set_encode: no contributing points");
  return push(std::move(n));
}

int Tape::add(int a, int b) {
  const auto& va = value(a);
  const auto& vb = value(b);
  if (va.size() != vb.size()) throw InputError("Tape::add: size mismatch");
  Node n;
  n.kind = Node::Kind::Add;
  n.a = a;
  n.b = b;
  n.value.resize(va.size());
  for (std::size_t i = 0; i < va.size(); ++i) n.value[i] = va[i] + vb[i];
  return push(std::move(n));
}

int Tape::abs_scalar(int a) {
  const auto& va = value(a);
  if (va.size() != 1) throw InputError("Tape::abs_scalar: needs a scalar");
  kink_margin_ = std::min(kink_margin_, std::abs(va[0]));
  Node n;
  n.kind = Node::Kind::AbsScalar;
  n.a = a;
  n.value = {std::abs(va[0])};
  return push(std::move(n));
}

int Tape::l2_diff(int a, int b) {
  const auto& va = value(a);
  const auto& vb = value(b);
  if (va.size() != vb.size()) throw InputError("Tape::l2_diff: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) {
    const double d = va[i] - vb[i];
    s += d * d;
  }
  const double norm = std::sqrt(s);
  kink_margin_ = std::min(kink_margin_, norm);
  Node n;
  n.kind = Node::Kind::L2Diff;
  n.a = a;
  n.b = b;
  n.value = {norm};
  return push(std::move(n));
}

int Tape::mse(const std::vector<int>& predictions,
              const std::vector<double>& labels) {
  if (predictions.empty()) throw InputError("Tape::mse: empty batch");
  if (predictions.size() != labels.size())
    throw InputError("Tape::mse: prediction/label count mismatch");
  double s = 0.0;
  for (std::size_t k = 0; k < predictions.size(); ++k) {
    const double r = scalar(predictions[k]) - labels[k];
    s += r * r;
  }
  Node n;
  n.kind = Node::Kind::Mse;
  n.ins = predictions;
  n.aux = labels;
  n.value = {s / static_cast<double>(predictions.size())};
  return push(std::move(n));
}

int Tape::weighted_sum_scalars(const std::vector<int>& xs,
                               const std::vector<double>& coeffs) {
  if (xs.size() != coeffs.size() || xs.empty())
    throw InputError("Tape::weighted_sum_scalars: bad arity");
  double s = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) s += coeffs[k] * scalar(xs[k]);
  Node n;
  n.kind = Node::Kind::WSum;
  n.ins = xs;
  n.aux = coeffs;
  n.value = {s};
  return push(std::move(n));
}

int Tape::pairwise_cost(int points, std::size_t rows, std::size_t dim,
                        const WeightedPointSet& other, int p) {
  if (p != 1 && p != 2)
    throw InputError("Tape::pairwise_cost: p must be 1 or 2");
  const auto& u = value(points);
  if (u.size() != rows * dim)
    throw InputError("Tape::pairwise_cost: points size mismatch");
  if (other.dim() != dim)
    throw InputError("Tape::pairwise_cost: dimension mismatch");
  Node n;
  n.kind = Node::Kind::PairCost;
  n.a = points;
  n.rows = rows;
  n.cols = other.size();
  n.dim = dim;
  n.p = p;
  n.aux = other.coords();
  n.value.assign(rows * n.cols, 0.0);
  n.cache.assign(rows * n.cols, 0.0);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < n.cols; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        const double d = u[i * dim + k] - n.aux[j * dim + k];
        s += d * d;
      }
      const double dist = std::sqrt(s);
      n.cache[i * n.cols + j] = dist;
      n.value[i * n.cols + j] = (p == 1) ? dist : s;
      if (p == 1) kink_margin_ = std::min(kink_margin_, dist);
    }
  return push(std::move(n));
}

int Tape::pairwise_cost_self(int points, std::size_t rows, std::size_t dim,
                             int p) {
  if (p != 1 && p != 2)
    throw InputError("Tape::pairwise_cost_self: p must be 1 or 2");
  const auto& u = value(points);
  if (u.size() != rows * dim)
    throw InputError("Tape::pairwise_cost_self: points size mismatch");
  Node n;
  n.kind = Node::Kind::PairCostSelf;
  n.a = points;
  n.rows = rows;
  n.cols = rows;
  n.dim = dim;
  n.p = p;
  n.value.assign(rows * rows, 0.0);
  n.cache.assign(rows * rows, 0.0);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < rows; ++j) {
      if (i == j) continue;
      double s = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        const double d = u[i * dim + k] - u[j * dim + k];
        s += d * d;
      }
      const double dist = std::sqrt(s);
      n.cache[i * rows + j] = dist;
      n.value[i * rows + j] = (p == 1) ? dist : s;
      if (p == 1 && i != j) kink_margin_ = std::min(kink_margin_, dist);
    }
  return push(std::move(n));
}

namespace {

double lse(const double* x, std::size_t k) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < k; ++i) mx = std::max(mx, x[i]);
  double s = 0.0;
  for (std::size_t i = 0; i < k; ++i) s += std::exp(x[i] - mx);
  return mx + std::log(s);
}

}  // namespace

int Tape::sinkhorn_f_update(int cost, std::size_t rows, std::size_t cols,
                            int g, std::vector<double> log_b, double epsilon) {
  const auto& C = value(cost);
  const auto& gv = value(g);
  if (C.size() != rows * cols || gv.size() != cols || log_b.size() != cols)
    throw InputError("Tape::sinkhorn_f_update: size mismatch");
  Node n;
  n.kind = Node::Kind::SinkF;
  n.a = cost;
  n.b = g;
  n.rows = rows;
  n.cols = cols;
  n.eps = epsilon;
  n.aux = std::move(log_b);
  n.value.assign(rows, 0.0);
  std::vector<double> buf(cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j)
      buf[j] = (gv[j] - C[i * cols + j]) / epsilon + n.aux[j];
    n.value[i] = -epsilon * lse(buf.data(), cols);
  }
  return push(std::move(n));
}

int Tape::sinkhorn_g_update(int cost, std::size_t rows, std::size_t cols,
                            int f, std::vector<double> log_a, double epsilon) {
  const auto& C = value(cost);
  const auto& fv = value(f);
  if (C.size() != rows * cols || fv.size() != rows || log_a.size() != rows)
    throw InputError("Tape::sinkhorn_g_update: size mismatch");
  Node n;
  n.kind = Node::Kind::SinkG;
  n.a = cost;
  n.b = f;
  n.rows = rows;
  n.cols = cols;
  n.eps = epsilon;
  n.aux = std::move(log_a);
  n.value.assign(cols, 0.0);
  std::vector<double> buf(rows);
  for (std::size_t j = 0; j < cols; ++j) {
    for (std::size_t i = 0; i < rows; ++i)
      buf[i] = (fv[i] - C[i * cols + j]) / epsilon + n.aux[i];
    n.value[j] = -epsilon * lse(buf.data(), rows);
  }
  return push(std::move(n));
}

int Tape::entropic_dual(int f, int g, std::vector<double> a,
                        std::vector<double> b) {
  const auto& fv = value(f);
  const auto& gv = value(g);
  if (fv.size() != a.size() || gv.size() != b.size())
    throw InputError("Tape::entropic_dual: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += fv[i] * a[i];
  for (std::size_t j = 0; j < b.size(); ++j) s += gv[j] * b[j];
  Node n;
  n.kind = Node::Kind::Dual;
  n.a = f;
  n.b = g;
  n.aux = std::move(a);
  n.aux2 = std::move(b);
  n.value = {s};
  return push(std::move(n));
}

void Tape::backward(int node) {
  if (node < 0 || node >= static_cast<int>(nodes_.size()))
    throw UsageError("Tape::backward: no recorded node at that id");
  if (nodes_[node].value.size() != 1)
    throw UsageError("Tape::backward: output must be scalar");
  nodes_[node].grad[0] = 1.0;
  for (int id = node; id >= 0; --id) {
    Node& n = nodes_[id];
    const auto& gout = n.grad;
    bool all_zero = true;
    for (const double g : gout)
      if (g != 0.0) {
        all_zero = false;
        break;
      }
    if (all_zero) continue;
    switch (n.kind) {
      case Node::Kind::Const:
        break;
      case Node::Kind::Mlp: {
        auto& in = nodes_[n.a];
        backward_mlp(n.store, in.value, n.cache, gout, in.grad);
        break;
      }
      case Node::Kind::SetEncode: {
        const MlpSpec& spec = stores_[n.store]->spec();
        const std::size_t out = spec.output_dim;
        const std::size_t cache_per = mlp_cache_size(spec);
        const std::size_t stride = n.dim + cache_per;
        std::vector<double> adj(out);
        for (std::size_t k = 0; k < n.members.size(); ++k) {
          const double* slot = n.cache.data() + k * stride;
          bool touched = false;
          if (n.pooling == Pooling::Sum) {
            const double w = n.aux2[k];
            for (std::size_t c = 0; c < out; ++c) {
              adj[c] = w * gout[c];
              touched = touched || adj[c] != 0.0;
            }
          } else {
            std::fill(adj.begin(), adj.end(), 0.0);
            for (std::size_t c = 0; c < out; ++c) {
              if (n.argmax[c] == k && gout[c] != 0.0) {
                adj[c] = gout[c];
                touched = true;
              }
            }
          }
          if (!touched) continue;
          backward_mlp(n.store, {slot, n.dim}, {slot + n.dim, cache_per}, adj,
                       {});
        }
        break;
      }
      case Node::Kind::Add: {
        auto& ga = nodes_[n.a].grad;
        auto& gb = nodes_[n.b].grad;
        for (std::size_t i = 0; i < gout.size(); ++i) {
          ga[i] += gout[i];
          gb[i] += gout[i];
        }
        break;
      }
      case Node::Kind::AbsScalar: {
        const double x = nodes_[n.a].value[0];
        if (x > 0.0)
          nodes_[n.a].grad[0] += gout[0];
        else if (x < 0.0)
          nodes_[n.a].grad[0] -= gout[0];
        break;
      }
      case Node::Kind::L2Diff: {
        const double norm = n.value[0];
        if (norm <= 0.0) break;
        const auto& va = nodes_[n.a].value;
        const auto& vb = nodes_[n.b].value;
        auto& ga = nodes_[n.a].grad;
        auto& gb = nodes_[n.b].grad;
        const double s = gout[0] / norm;
        for (std::size_t i = 0; i < va.size(); ++i) {
          const double d = (va[i] - vb[i]) * s;
          ga[i] += d;
          gb[i] -= d;
        }
        break;
      }
      case Node::Kind::Mse: {
        const double scale =
            2.0 * gout[0] / static_cast<double>(n.ins.size());
        for (std::size_t k = 0; k < n.ins.size(); ++k) {
          const double r = nodes_[n.ins[k]].value[0] - n.aux[k];
          nodes_[n.ins[k]].grad[0] += scale * r;
        }
        break;
      }
      case Node::Kind::WSum: {
        for (std::size_t k = 0; k < n.ins.size(); ++k)
          nodes_[n.ins[k]].grad[0] += gout[0] * n.aux[k];
        break;
      }
      case Node::Kind::PairCost: {
        const auto& u = nodes_[n.a].value;
        auto& gu = nodes_[n.a].grad;
        for (std::size_t i = 0; i < n.rows; ++i)
          for (std::size_t j = 0; j < n.cols; ++j) {
            const double g = gout[i * n.cols + j];
            if (g == 0.0) continue;
            if (n.p == 2) {
              for (std::size_t k = 0; k < n.dim; ++k)
                gu[i * n.dim + k] +=
                    g * 2.0 * (u[i * n.dim + k] - n.aux[j * n.dim + k]);
            } else {
              const double dist = n.cache[i * n.cols + j];
              if (dist <= 0.0) continue;
              for (std::size_t k = 0; k < n.dim; ++k)
                gu[i * n.dim + k] +=
                    g * (u[i * n.dim + k] - n.aux[j * n.dim + k]) / dist;
            }
          }
        break;
      }
      case Node::Kind::PairCostSelf: {
        const auto& u = nodes_[n.a].value;
        auto& gu = nodes_[n.a].grad;
        for (std::size_t i = 0; i < n.rows; ++i)
          for (std::size_t j = 0; j < n.rows; ++j) {
            if (i == j) continue;
            const double g = gout[i * n.rows + j];
            if (g == 0.0) continue;
            if (n.p == 2) {
              for (std::size_t k = 0; k < n.dim; ++k) {
                const double d =
                    2.0 * (u[i * n.dim + k] - u[j * n.dim + k]) * g;
                gu[i * n.dim + k] += d;
                gu[j * n.dim + k] -= d;
              }
            } else {
              const double dist = n.cache[i * n.rows + j];
              if (dist <= 0.0) continue;
              for (std::size_t k = 0; k < n.dim; ++k) {
                const double d =
                    (u[i * n.dim + k] - u[j * n.dim + k]) / dist * g;
                gu[i * n.dim + k] += d;
                gu[j * n.dim + k] -= d;
              }
            }
          }
        break;
      }
      case Node::Kind::SinkF: {
        const auto& C = nodes_[n.a].value;
        const auto& gv = nodes_[n.b].value;
        auto& gC = nodes_[n.a].grad;
        auto& gg = nodes_[n.b].grad;
        for (std::size_t i = 0; i < n.rows; ++i) {
          const double fa = gout[i];
          if (fa == 0.0) continue;
          for (std::size_t j = 0; j < n.cols; ++j) {
            const double s = std::exp(
                (n.value[i] + gv[j] - C[i * n.cols + j]) / n.eps + n.aux[j]);
            gC[i * n.cols + j] += fa * s;
            gg[j] -= fa * s;
          }
        }
        break;
      }
      case Node::Kind::SinkG: {
        const auto& C = nodes_[n.a].value;
        const auto& fv = nodes_[n.b].value;
        auto& gC = nodes_[n.a].grad;
        auto& gf = nodes_[n.b].grad;
        for (std::size_t j = 0; j < n.cols; ++j) {
          const double ga = gout[j];
          if (ga == 0.0) continue;
          for (std::size_t i = 0; i < n.rows; ++i) {
            const double s = std::exp(
                (fv[i] + n.value[j] - C[i * n.cols + j]) / n.eps + n.aux[i]);
            gC[i * n.cols + j] += ga * s;
            gf[i] -= ga * s;
          }
        }
        break;
      }
      case Node::Kind::Dual: {
        auto& gf = nodes_[n.a].grad;
        auto& gg = nodes_[n.b].grad;
        for (std::size_t i = 0; i < n.aux.size(); ++i)
          gf[i] += gout[0] * n.aux[i];
        for (std::size_t j = 0; j < n.aux2.size(); ++j)
          gg[j] += gout[0] * n.aux2[j];
        break;
      }
    }
  }
}

void adam_step(AdamState& state, std::span<double> params,
               std::span<const double> grads) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw InputError("adam_step: size mismatch");
  for (const double g : grads)
    if (std::isnan(g)) throw NumericError("adam_step: NaN gradient");
  state.step_count += 1;
  const AdamConfig& c = state.config;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    state.m[k] = c.beta1 * state.m[k] + (1.0 - c.beta1) * grads[k];
    state.v[k] = c.beta2 * state.v[k] + (1.0 - c.beta2) * grads[k] * grads[k];
    const double mhat = state.m[k] / bc1;
    const double vhat = state.v[k] / bc2;
    params[k] -= c.lr * mhat / (std::sqrt(vhat) + c.eps_hat);
  }
}

}  // namespace setdist::nn
