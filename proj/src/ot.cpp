#include "setdist/ot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace setdist::ot {

namespace {

constexpr double kReducedCostTol = 1e-11;
constexpr double kPerturb = 1e-12;

struct Support {
  std::vector<std::size_t> idx;
  std::vector<double> w;
};

Support positive_support(const WeightedPointSet& S) {
  Support s;
  for (std::size_t i = 0; i < S.size(); ++i) {
    if (S.weight(i) > 0.0) {
      s.idx.push_back(i);
      s.w.push_back(S.weight(i));
    }
  }
  if (s.idx.empty()) throw InputError("point set has empty support");
  return s;
}

double pow_cost(double d, int p) {
  if (p == 1) return d;
  if (p == 2) return d * d;
  return std::pow(d, p);
}

double root_cost(double c, int p) {
  if (c < 0.0) c = 0.0;
  if (p == 1) return c;
  if (p == 2) return std::sqrt(c);
  return std::pow(c, 1.0 / p);
}

Matrix support_cost_matrix(const WeightedPointSet& P, const WeightedPointSet& Q,
                           const Support& sp, const Support& sq, int p,
                           Metric metric) {
  Matrix C(sp.idx.size(), sq.idx.size());
  for (std::size_t i = 0; i < sp.idx.size(); ++i)
    for (std::size_t j = 0; j < sq.idx.size(); ++j)
      C(i, j) = pow_cost(
          ground_dist(metric, P.point(sp.idx[i]), Q.point(sq.idx[j])), p);
  return C;
}

// Solves the unique flow on a spanning-tree basis by leaf elimination.
// Returns false if the arcs do not form a spanning tree of the n+m
// node bipartite graph. Flows may come out negative; callers decide.
bool solve_tree_flows(std::size_t n, std::size_t m,
                      const std::vector<std::uint32_t>& arc_i,
                      const std::vector<std::uint32_t>& arc_j,
                      const std::vector<double>& a, const std::vector<double>& b,
                      std::vector<double>& flows) {
  const std::size_t nodes = n + m;
  const std::size_t k = arc_i.size();
  if (k != nodes - 1) return false;
  std::vector<std::vector<std::uint32_t>> adj(nodes);
  for (std::size_t e = 0; e < k; ++e) {
    adj[arc_i[e]].push_back(static_cast<std::uint32_t>(e));
    adj[n + arc_j[e]].push_back(static_cast<std::uint32_t>(e));
  }
  std::vector<double> rem(nodes);
  for (std::size_t i = 0; i < n; ++i) rem[i] = a[i];
  for (std::size_t j = 0; j < m; ++j) rem[n + j] = b[j];
  std::vector<std::uint32_t> deg(nodes);
  std::vector<std::size_t> cursor(nodes, 0);
  std::vector<std::uint32_t> leaves;
  for (std::size_t v = 0; v < nodes; ++v) {
    deg[v] = static_cast<std::uint32_t>(adj[v].size());
    if (deg[v] == 0) return false;
    if (deg[v] == 1) leaves.push_back(static_cast<std::uint32_t>(v));
  }
  flows.assign(k, 0.0);
  std::vector<bool> done(k, false);
  std::size_t processed = 0;
  while (!leaves.empty()) {
    const std::uint32_t v = leaves.back();
    leaves.pop_back();
    if (deg[v] != 1) continue;
    // find the remaining incident arc
    std::size_t& cur = cursor[v];
    while (cur < adj[v].size() && done[adj[v][cur]]) ++cur;
    if (cur == adj[v].size()) return false;
    const std::uint32_t e = adj[v][cur];
    const std::uint32_t other =
        (v < n) ? n + arc_j[e] : arc_i[e];
    flows[e] = rem[v];
    rem[other] -= rem[v];
    rem[v] = 0.0;
    done[e] = true;
    ++processed;
    --deg[v];
    --deg[other];
    if (deg[other] == 1) leaves.push_back(other);
  }
  return processed == k;
}

// Dense transportation simplex with a spanning-tree basis. Marginals
// are perturbed during pivoting to break degeneracy; the final flows
// are re-solved on the optimal basis with the true weights. Duals and
// the tree are patched locally per pivot (only the detached subtree is
// touched), which keeps large instances tractable.
class TransportSimplex {
 public:
  TransportSimplex(const Matrix& cost, std::vector<double> a,
                   std::vector<double> b)
      : C_(cost), a_(std::move(a)), b_(std::move(b)), n_(a_.size()),
        m_(b_.size()) {
    // i*kPerturb added per row, total folded into the last column so
    // every marginal stays positive and the problem stays balanced.
    double total = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
      const double eps = static_cast<double>(i + 1) * kPerturb;
      ap_.push_back(a_[i] + eps);
      total += eps;
    }
    bp_ = b_;
    bp_[m_ - 1] += total;
  }

  // Runs pivots to optimality; returns the number of pivots.
  std::size_t solve() {
    if (n_ + m_ > 512) {
      if (!init_row_minimum()) init_northwest();
    } else {
      init_northwest();
    }
    rebuild_tree();
    const std::size_t pivot_limit = 2000 + 400 * (n_ + m_);
    std::size_t pivots = 0;
    std::uint32_t ei, ej;
    while (find_entering(ei, ej)) {
      pivot(ei, ej);
      if (++pivots > pivot_limit)
        throw NumericError("transportation simplex: pivot limit exceeded");
    }
    return pivots;
  }

  const std::vector<double>& row_duals() const { return u_; }
  const std::vector<double>& col_duals() const { return v_; }

  // Flows for the true (unperturbed) marginals on the final basis.
  void final_plan(Matrix& plan) const {
    std::vector<double> flows;
    if (!solve_tree_flows(n_, m_, arc_i_, arc_j_, a_, b_, flows))
      throw NumericError("transportation simplex: basis is not a tree");
    plan = Matrix(n_, m_);
    for (std::size_t e = 0; e < flows.size(); ++e)
      plan(arc_i_[e], arc_j_[e]) = std::max(flows[e], 0.0);
  }

 private:
  void attach_all_arcs() {
    adj_.assign(n_ + m_, {});
    for (std::size_t e = 0; e < arc_i_.size(); ++e) {
      adj_[arc_i_[e]].push_back(static_cast<std::uint32_t>(e));
      adj_[n_ + arc_j_[e]].push_back(static_cast<std::uint32_t>(e));
    }
  }

  void init_northwest() {
    const std::size_t k = n_ + m_ - 1;
    arc_i_.clear();
    arc_j_.clear();
    flow_.clear();
    arc_i_.reserve(k);
    arc_j_.reserve(k);
    flow_.reserve(k);
    std::size_t i = 0, j = 0;
    double ra = ap_[0], rb = bp_[0];
    while (true) {
      arc_i_.push_back(static_cast<std::uint32_t>(i));
      arc_j_.push_back(static_cast<std::uint32_t>(j));
      flow_.push_back(std::min(ra, rb));
      if (i == n_ - 1 && j == m_ - 1) break;
      bool advance_row;
      if (i == n_ - 1) advance_row = false;
      else if (j == m_ - 1) advance_row = true;
      else advance_row = (ra <= rb);
      if (advance_row) {
        rb -= ra;
        ++i;
        ra = ap_[i];
      } else {
        ra -= rb;
        ++j;
        rb = bp_[j];
      }
    }
    attach_all_arcs();
  }

  // Sequential row-minimum start: each row ships to the cheapest
  // columns with remaining demand. Produces a spanning-tree basic
  // solution when no interior tie occurs; returns false otherwise so
  // the caller can fall back to the northwest rule.
  bool init_row_minimum() {
    arc_i_.clear();
    arc_j_.clear();
    flow_.clear();
    std::vector<double> rem_b = bp_;
    std::vector<std::uint32_t> open(m_);
    std::iota(open.begin(), open.end(), 0u);
    for (std::size_t i = 0; i < n_; ++i) {
      double ra = ap_[i];
      const double* crow = &C_.data[i * m_];
      const bool last_row = (i == n_ - 1);
      while (true) {
        if (open.empty()) return false;
        std::size_t pick = 0;
        for (std::size_t t = 1; t < open.size(); ++t)
          if (crow[open[t]] < crow[open[pick]]) pick = t;
        const std::uint32_t j = open[pick];
        arc_i_.push_back(static_cast<std::uint32_t>(i));
        arc_j_.push_back(j);
        if (ra < rem_b[j] && !last_row) {
          flow_.push_back(ra);
          rem_b[j] -= ra;
          break;  // row exhausted, column stays open
        }
        if (ra == rem_b[j] && !last_row) return false;  // interior tie
        flow_.push_back(rem_b[j]);
        ra -= rem_b[j];
        rem_b[j] = 0.0;
        open[pick] = open.back();
        open.pop_back();
        if (last_row && open.empty()) {
          flow_.back() += ra;  // fold residual rounding into final arc
          break;
        }
      }
    }
    if (arc_i_.size() != n_ + m_ - 1) return false;
    attach_all_arcs();
    return true;
  }

  // Full pass assigning parents, depths and duals (u[0] = 0).
  void rebuild_tree() {
    const std::size_t nodes = n_ + m_;
    parent_.assign(nodes, -1);
    parent_arc_.assign(nodes, -1);
    depth_.assign(nodes, 0);
    u_.assign(n_, 0.0);
    v_.assign(m_, 0.0);
    mark_.assign(nodes, 0);
    mark_epoch_ = 0;
    stack_.clear();
    stack_.push_back(0);
    std::vector<bool> seen(nodes, false);
    seen[0] = true;
    while (!stack_.empty()) {
      const std::uint32_t x = stack_.back();
      stack_.pop_back();
      for (const std::uint32_t e : adj_[x]) {
        const std::uint32_t y = (x < n_) ? n_ + arc_j_[e] : arc_i_[e];
        if (seen[y]) continue;
        seen[y] = true;
        parent_[y] = static_cast<std::int32_t>(x);
        parent_arc_[y] = static_cast<std::int32_t>(e);
        depth_[y] = depth_[x] + 1;
        if (y >= n_)
          v_[y - n_] = C_(arc_i_[e], arc_j_[e]) - u_[arc_i_[e]];
        else
          u_[y] = C_(arc_i_[e], arc_j_[e]) - v_[x - n_];
        stack_.push_back(y);
      }
    }
  }

  // Row-block pricing: scan rows from a rotating start, keep the most
  // negative reduced cost seen, stop once a candidate is in hand and a
  // minimum number of arcs has been examined.
  bool find_entering(std::uint32_t& ei, std::uint32_t& ej) {
    constexpr std::size_t kMinScan = 4096;
    double best = -kReducedCostTol;
    std::int64_t best_i = -1, best_j = -1;
    std::size_t row = scan_row_;
    std::size_t examined = 0;
    for (std::size_t r = 0; r < n_; ++r) {
      const double ui = u_[row];
      const double* crow = &C_.data[row * m_];
      for (std::size_t j = 0; j < m_; ++j) {
        const double rc = crow[j] - ui - v_[j];
        if (rc < best) {
          best = rc;
          best_i = static_cast<std::int64_t>(row);
          best_j = static_cast<std::int64_t>(j);
        }
      }
      examined += m_;
      row = (row + 1 == n_) ? 0 : row + 1;
      if (best_i >= 0 && examined >= kMinScan) break;
    }
    if (best_i < 0) return false;
    ei = static_cast<std::uint32_t>(best_i);
    ej = static_cast<std::uint32_t>(best_j);
    scan_row_ = (ei + 1 == n_) ? 0 : ei + 1;
    return true;
  }

  void pivot(std::uint32_t ei, std::uint32_t ej) {
    // Tree path from the entering arc's column node back to its row
    // node; signs alternate starting with - next to the column.
    std::uint32_t x = ei;
    std::uint32_t y = static_cast<std::uint32_t>(n_ + ej);
    path_x_.clear();
    path_y_.clear();
    while (x != y) {
      if (depth_[x] >= depth_[y]) {
        path_x_.push_back(static_cast<std::uint32_t>(parent_arc_[x]));
        x = static_cast<std::uint32_t>(parent_[x]);
      } else {
        path_y_.push_back(static_cast<std::uint32_t>(parent_arc_[y]));
        y = static_cast<std::uint32_t>(parent_[y]);
      }
    }
    cycle_.clear();
    cycle_.insert(cycle_.end(), path_y_.begin(), path_y_.end());
    cycle_.insert(cycle_.end(), path_x_.rbegin(), path_x_.rend());

    double theta = std::numeric_limits<double>::infinity();
    std::int64_t leave = -1;
    for (std::size_t k = 0; k < cycle_.size(); ++k) {
      if (k % 2 != 0) continue;  // minus arcs sit at even positions
      const std::uint32_t e = cycle_[k];
      if (flow_[e] < theta ||
          (flow_[e] == theta && static_cast<std::int64_t>(e) < leave)) {
        theta = flow_[e];
        leave = static_cast<std::int64_t>(e);
      }
    }
    if (leave < 0)
      throw NumericError("transportation simplex: no leaving arc");
    for (std::size_t k = 0; k < cycle_.size(); ++k)
      flow_[cycle_[k]] += (k % 2 == 0) ? -theta : theta;

    const auto slot = static_cast<std::uint32_t>(leave);
    const std::uint32_t lrow = arc_i_[slot];
    const std::uint32_t lcol = static_cast<std::uint32_t>(n_ + arc_j_[slot]);
    // Deeper endpoint of the leaving arc roots the detached subtree.
    const std::uint32_t det_root = depth_[lrow] > depth_[lcol] ? lrow : lcol;

    detach(lrow, slot);
    detach(lcol, slot);
    arc_i_[slot] = ei;
    arc_j_[slot] = ej;
    flow_[slot] = theta;
    adj_[ei].push_back(slot);
    adj_[static_cast<std::size_t>(n_) + ej].push_back(slot);
    repair_tree(det_root, slot, ei, static_cast<std::uint32_t>(n_ + ej));
  }

  // Re-hangs the detached component on the entering arc and shifts its
  // duals by a constant.
  void repair_tree(std::uint32_t det_root, std::uint32_t enter_slot,
                   std::uint32_t enter_row, std::uint32_t enter_col) {
    ++mark_epoch_;
    det_nodes_.clear();
    stack_.clear();
    stack_.push_back(det_root);
    mark_[det_root] = mark_epoch_;
    while (!stack_.empty()) {
      const std::uint32_t v = stack_.back();
      stack_.pop_back();
      det_nodes_.push_back(v);
      for (const std::uint32_t e : adj_[v]) {
        if (e == enter_slot) continue;
        const std::uint32_t w = (v < n_) ? n_ + arc_j_[e] : arc_i_[e];
        if (mark_[w] != mark_epoch_) {
          mark_[w] = mark_epoch_;
          stack_.push_back(w);
        }
      }
    }
    const bool row_inside = mark_[enter_row] == mark_epoch_;
    const std::uint32_t inner = row_inside ? enter_row : enter_col;
    const std::uint32_t outer = row_inside ? enter_col : enter_row;
    parent_[inner] = static_cast<std::int32_t>(outer);
    parent_arc_[inner] = static_cast<std::int32_t>(enter_slot);

    // Dual shift: rows and columns inside the component move by
    // opposite amounts so basic arcs keep zero reduced cost.
    const double cost = C_(arc_i_[enter_slot], arc_j_[enter_slot]);
    double delta;
    if (row_inside)
      delta = (cost - v_[outer - n_]) - u_[inner];
    else
      delta = (cost - u_[outer]) - v_[inner - n_];
    for (const std::uint32_t v : det_nodes_) {
      const bool is_row = v < n_;
      const double shift = (is_row == row_inside) ? delta : -delta;
      if (is_row)
        u_[v] += shift;
      else
        v_[v - n_] += shift;
    }

    // Depths inside the component, walking down from the new hook.
    depth_[inner] = depth_[outer] + 1;
    stack_.clear();
    stack_.push_back(inner);
    while (!stack_.empty()) {
      const std::uint32_t v = stack_.back();
      stack_.pop_back();
      for (const std::uint32_t e : adj_[v]) {
        const std::uint32_t w = (v < n_) ? n_ + arc_j_[e] : arc_i_[e];
        if (mark_[w] == mark_epoch_ &&
            parent_[v] != static_cast<std::int32_t>(w)) {
          parent_[w] = static_cast<std::int32_t>(v);
          parent_arc_[w] = static_cast<std::int32_t>(e);
          depth_[w] = depth_[v] + 1;
          stack_.push_back(w);
        }
      }
    }
  }

  void detach(std::uint32_t node, std::uint32_t slot) {
    auto& lst = adj_[node];
    for (std::size_t k = 0; k < lst.size(); ++k) {
      if (lst[k] == slot) {
        lst[k] = lst.back();
        lst.pop_back();
        return;
      }
    }
    throw NumericError("transportation simplex: basis arc missing");
  }

  const Matrix& C_;
  std::vector<double> a_, b_;    // true marginals
  std::size_t n_, m_;
  std::vector<double> ap_, bp_;  // perturbed marginals
  std::vector<std::uint32_t> arc_i_, arc_j_;
  std::vector<double> flow_;
  std::vector<std::vector<std::uint32_t>> adj_;
  std::vector<double> u_, v_;
  std::vector<std::int32_t> parent_, parent_arc_;
  std::vector<std::uint32_t> depth_;
  std::size_t scan_row_ = 0;
  std::vector<std::uint32_t> path_x_, path_y_, cycle_, det_nodes_, stack_;
  std::vector<std::uint32_t> mark_;
  std::uint32_t mark_epoch_ = 0;
};

OtResult embed_result(const WeightedPointSet& P, const WeightedPointSet& Q,
                      const Support& sp, const Support& sq,
                      const Matrix& support_plan, const Matrix& costp, int p,
                      std::size_t iterations, bool converged) {
  OtResult out;
  out.plan.plan = Matrix(P.size(), Q.size());
  double obj = 0.0;
  for (std::size_t i = 0; i < sp.idx.size(); ++i)
    for (std::size_t j = 0; j < sq.idx.size(); ++j) {
      const double f = support_plan(i, j);
      out.plan.plan(sp.idx[i], sq.idx[j]) = f;
      obj += f * costp(i, j);
    }
  out.plan.row_marginals = P.weights();
  out.plan.col_marginals = Q.weights();
  out.distance = root_cost(obj, p);
  out.iterations = iterations;
  out.converged = converged;
  return out;
}

void check_pair(const WeightedPointSet& P, const WeightedPointSet& Q, int p) {
  if (P.dim() != Q.dim())
    throw InputError("wasserstein: dimension mismatch");
  if (p < 1) throw InputError("wasserstein: p must be >= 1");
  const double sa = P.weight_sum(), sb = Q.weight_sum();
  if (std::abs(sa - sb) > 1e-9)
    throw InputError("wasserstein: weight totals differ");
}

double logsumexp(const double* x, std::size_t k) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < k; ++i) mx = std::max(mx, x[i]);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (std::size_t i = 0; i < k; ++i) s += std::exp(x[i] - mx);
  return mx + std::log(s);
}

struct SinkhornState {
  std::vector<double> f, g;
  std::size_t iterations = 0;
  bool converged = false;
};

// Alternating log-domain updates from f = g = 0; g is updated last so
// column marginals are exact and the row violation drives convergence.
SinkhornState run_sinkhorn(const Matrix& C, const std::vector<double>& a,
                           const std::vector<double>& b, double eps,
                           std::size_t max_iters, double tol) {
  const std::size_t n = a.size(), m = b.size();
  SinkhornState st;
  st.f.assign(n, 0.0);
  st.g.assign(m, 0.0);
  std::vector<double> la(n), lb(m), buf(std::max(n, m));
  for (std::size_t i = 0; i < n; ++i) la[i] = std::log(a[i]);
  for (std::size_t j = 0; j < m; ++j) lb[j] = std::log(b[j]);
  for (std::size_t it = 1; it <= max_iters; ++it) {
    st.iterations = it;
    for (std::size_t i = 0; i < n; ++i) {
      const double* crow = &C.data[i * m];
      for (std::size_t j = 0; j < m; ++j)
        buf[j] = (st.g[j] - crow[j]) / eps + lb[j];
      st.f[i] = -eps * logsumexp(buf.data(), m);
    }
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t i = 0; i < n; ++i)
        buf[i] = (st.f[i] - C.data[i * m + j]) / eps + la[i];
      st.g[j] = -eps * logsumexp(buf.data(), n);
    }
    if (it % 10 == 0 || it == max_iters) {
      double row_viol = 0.0, col_viol = 0.0;
      std::vector<double> col_sum(m, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        double row_sum = 0.0;
        const double* crow = &C.data[i * m];
        for (std::size_t j = 0; j < m; ++j) {
          const double pij =
              std::exp((st.f[i] + st.g[j] - crow[j]) / eps + la[i] + lb[j]);
          row_sum += pij;
          col_sum[j] += pij;
        }
        row_viol += std::abs(row_sum - a[i]);
      }
      for (std::size_t j = 0; j < m; ++j)
        col_viol += std::abs(col_sum[j] - b[j]);
      if (row_viol < tol && col_viol < tol) {
        st.converged = true;
        break;
      }
    }
  }
  return st;
}

// Projects a nonnegative matrix onto the transportation polytope by
// row/column scaling plus a rank-one correction.
void round_to_marginals(Matrix& Pi, const std::vector<double>& a,
                        const std::vector<double>& b) {
  const std::size_t n = Pi.rows, m = Pi.cols;
  for (std::size_t i = 0; i < n; ++i) {
    double rs = 0.0;
    for (std::size_t j = 0; j < m; ++j) rs += Pi(i, j);
    const double alpha = (rs > a[i] && rs > 0.0) ? a[i] / rs : 1.0;
    if (alpha != 1.0)
      for (std::size_t j = 0; j < m; ++j) Pi(i, j) *= alpha;
  }
  std::vector<double> cs(m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) cs[j] += Pi(i, j);
  for (std::size_t j = 0; j < m; ++j) {
    const double beta = (cs[j] > b[j] && cs[j] > 0.0) ? b[j] / cs[j] : 1.0;
    if (beta != 1.0)
      for (std::size_t i = 0; i < n; ++i) Pi(i, j) *= beta;
  }
  std::vector<double> ea(n, 0.0), eb(m, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double rs = 0.0;
    for (std::size_t j = 0; j < m; ++j) rs += Pi(i, j);
    ea[i] = a[i] - rs;
    total += ea[i];
  }
  std::vector<double> cs2(m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) cs2[j] += Pi(i, j);
  for (std::size_t j = 0; j < m; ++j) eb[j] = b[j] - cs2[j];
  if (total > 1e-300) {
    for (std::size_t i = 0; i < n; ++i) {
      if (ea[i] == 0.0) continue;
      for (std::size_t j = 0; j < m; ++j)
        Pi(i, j) += ea[i] * eb[j] / total;
    }
  }
}

double entropic_dual(const Matrix& C, const std::vector<double>& a,
                     const std::vector<double>& b, const SinkhornConfig& cfg) {
  const SinkhornState st =
      run_sinkhorn(C, a, b, cfg.epsilon, cfg.max_iters, cfg.marginal_tol);
  double val = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) val += st.f[i] * a[i];
  for (std::size_t j = 0; j < b.size(); ++j) val += st.g[j] * b[j];
  return val;
}

}  // namespace

OtResult wasserstein_exact(const WeightedPointSet& P, const WeightedPointSet& Q,
                           int p, Metric metric) {
  check_pair(P, Q, p);
  const Support sp = positive_support(P);
  const Support sq = positive_support(Q);
  const Matrix C = support_cost_matrix(P, Q, sp, sq, p, metric);
  TransportSimplex simplex(C, sp.w, sq.w);
  const std::size_t pivots = simplex.solve();
  Matrix plan;
  simplex.final_plan(plan);
  OtResult out = embed_result(P, Q, sp, sq, plan, C, p, pivots, true);
  // Embed duals; zero-weight atoms get the tightest feasible value.
  out.row_duals.assign(P.size(), 0.0);
  out.col_duals.assign(Q.size(), 0.0);
  for (std::size_t i = 0; i < sp.idx.size(); ++i)
    out.row_duals[sp.idx[i]] = simplex.row_duals()[i];
  for (std::size_t j = 0; j < sq.idx.size(); ++j)
    out.col_duals[sq.idx[j]] = simplex.col_duals()[j];
  for (std::size_t i = 0; i < P.size(); ++i) {
    if (P.weight(i) > 0.0) continue;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < sq.idx.size(); ++j)
      best = std::min(best, pow_cost(ground_dist(metric, P.point(i),
                                                 Q.point(sq.idx[j])), p) -
                                simplex.col_duals()[j]);
    out.row_duals[i] = best;
  }
  for (std::size_t j = 0; j < Q.size(); ++j) {
    if (Q.weight(j) > 0.0) continue;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < sp.idx.size(); ++i)
      best = std::min(best, pow_cost(ground_dist(metric, P.point(sp.idx[i]),
                                                 Q.point(j)), p) -
                                simplex.row_duals()[i]);
    out.col_duals[j] = best;
  }
  return out;
}

OtResult wasserstein_bruteforce(const WeightedPointSet& P,
                                const WeightedPointSet& Q, int p,
                                Metric metric) {
  check_pair(P, Q, p);
  if (P.size() * Q.size() > 20)
    throw InputError("wasserstein_bruteforce: instance too large (n*m > 20)");
  const Support sp = positive_support(P);
  const Support sq = positive_support(Q);
  const std::size_t n = sp.idx.size(), m = sq.idx.size();
  const Matrix C = support_cost_matrix(P, Q, sp, sq, p, metric);

  const std::size_t cells = n * m;
  const std::size_t k = n + m - 1;
  std::vector<std::size_t> comb(k);
  std::iota(comb.begin(), comb.end(), std::size_t{0});
  double best_cost = std::numeric_limits<double>::infinity();
  Matrix best_plan;
  std::size_t trees = 0;
  std::vector<std::uint32_t> ai(k), aj(k);
  std::vector<double> flows;
  while (true) {
    for (std::size_t e = 0; e < k; ++e) {
      ai[e] = static_cast<std::uint32_t>(comb[e] / m);
      aj[e] = static_cast<std::uint32_t>(comb[e] % m);
    }
    if (solve_tree_flows(n, m, ai, aj, sp.w, sq.w, flows)) {
      ++trees;
      bool feasible = true;
      double cost = 0.0;
      for (std::size_t e = 0; e < k; ++e) {
        if (flows[e] < -1e-12) {
          feasible = false;
          break;
        }
        cost += std::max(flows[e], 0.0) * C(ai[e], aj[e]);
      }
      if (feasible && cost < best_cost) {
        best_cost = cost;
        best_plan = Matrix(n, m);
        for (std::size_t e = 0; e < k; ++e)
          best_plan(ai[e], aj[e]) = std::max(flows[e], 0.0);
      }
    }
    // next k-combination of [0, cells)
    std::size_t pos = k;
    while (pos > 0 && comb[pos - 1] == cells - k + pos - 1) --pos;
    if (pos == 0) break;
    ++comb[pos - 1];
    for (std::size_t q = pos; q < k; ++q) comb[q] = comb[q - 1] + 1;
  }
  if (!std::isfinite(best_cost))
    throw NumericError("wasserstein_bruteforce: no feasible basis found");
  return embed_result(P, Q, sp, sq, best_plan, C, p, trees, true);
}

OtResult sinkhorn(const WeightedPointSet& P, const WeightedPointSet& Q, int p,
                  Metric metric, const SinkhornConfig& cfg) {
  cfg.validate();
  check_pair(P, Q, p);
  const Support sp = positive_support(P);
  const Support sq = positive_support(Q);
  const Matrix C = support_cost_matrix(P, Q, sp, sq, p, metric);
  const SinkhornState st = run_sinkhorn(C, sp.w, sq.w, cfg.epsilon,
                                        cfg.max_iters, cfg.marginal_tol);
  const std::size_t n = sp.w.size(), m = sq.w.size();
  Matrix Pi(n, m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j)
      Pi(i, j) = std::exp((st.f[i] + st.g[j] - C(i, j)) / cfg.epsilon) *
                 sp.w[i] * sq.w[j];
  round_to_marginals(Pi, sp.w, sq.w);
  OtResult out = embed_result(P, Q, sp, sq, Pi, C, p, st.iterations,
                              st.converged);
  return out;
}

double sinkhorn_divergence(const WeightedPointSet& P, const WeightedPointSet& Q,
                           int p, Metric metric, const SinkhornConfig& cfg) {
  cfg.validate();
  check_pair(P, Q, p);
  const Support sp = positive_support(P);
  const Support sq = positive_support(Q);
  const Matrix Cab = support_cost_matrix(P, Q, sp, sq, p, metric);
  const Matrix Caa = support_cost_matrix(P, P, sp, sp, p, metric);
  const Matrix Cbb = support_cost_matrix(Q, Q, sq, sq, p, metric);
  const double ab = entropic_dual(Cab, sp.w, sq.w, cfg);
  const double aa = entropic_dual(Caa, sp.w, sp.w, cfg);
  const double bb = entropic_dual(Cbb, sq.w, sq.w, cfg);
  return ab - 0.5 * aa - 0.5 * bb;
}

double hausdorff(const WeightedPointSet& P, const WeightedPointSet& Q,
                 Metric metric) {
  if (P.dim() != Q.dim()) throw InputError("hausdorff: dimension mismatch");
  const auto sup_p = P.support();
  const auto sup_q = Q.support();
  if (sup_p.empty() || sup_q.empty())
    throw InputError("hausdorff: empty support");
  auto directed = [&](const WeightedPointSet& A, const WeightedPointSet& B,
                      const std::vector<std::size_t>& sa,
                      const std::vector<std::size_t>& sb) {
    double worst = 0.0;
    for (const std::size_t i : sa) {
      double nearest = std::numeric_limits<double>::infinity();
      for (const std::size_t j : sb)
        nearest = std::min(nearest, ground_dist(metric, A.point(i), B.point(j)));
      worst = std::max(worst, nearest);
    }
    return worst;
  };
  return std::max(directed(P, Q, sup_p, sup_q), directed(Q, P, sup_q, sup_p));
}

namespace detail {

double entropic_ot_dual_unrolled(const Matrix& costp,
                                 const std::vector<double>& a,
                                 const std::vector<double>& b, double epsilon,
                                 std::size_t iters) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<double> f(n, 0.0), g(m, 0.0), la(n), lb(m), buf(std::max(n, m));
  for (std::size_t i = 0; i < n; ++i) la[i] = std::log(a[i]);
  for (std::size_t j = 0; j < m; ++j) lb[j] = std::log(b[j]);
  for (std::size_t it = 0; it < iters; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j)
        buf[j] = (g[j] - costp.data[i * m + j]) / epsilon + lb[j];
      f[i] = -epsilon * logsumexp(buf.data(), m);
    }
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t i = 0; i < n; ++i)
        buf[i] = (f[i] - costp.data[i * m + j]) / epsilon + la[i];
      g[j] = -epsilon * logsumexp(buf.data(), n);
    }
  }
  double val = 0.0;
  for (std::size_t i = 0; i < n; ++i) val += f[i] * a[i];
  for (std::size_t j = 0; j < m; ++j) val += g[j] * b[j];
  return val;
}

}  // namespace detail

}  // namespace setdist::ot
