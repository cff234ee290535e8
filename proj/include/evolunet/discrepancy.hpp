#pragma once

#include "evolunet/graph.hpp"
#include "evolunet/transport.hpp"
#include "evolunet/wl.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace evolunet {

/// Weighted point cloud; weights are nonnegative and sum to one.
struct EmpiricalDistribution {
  Eigen::MatrixXd points;  // n x dim
  Eigen::VectorXd weights;

  static EmpiricalDistribution uniform(Eigen::MatrixXd pts) {
    const auto n = pts.rows();
    if (n < 1) throw std::invalid_argument("EmpiricalDistribution: need at least one point");
    return {std::move(pts), Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n))};
  }

  Eigen::Index size() const { return points.rows(); }
  Eigen::Index dim() const { return points.cols(); }

  void check() const {
    if (points.rows() < 1) throw std::invalid_argument("EmpiricalDistribution: need at least one point");
    if (weights.size() != points.rows()) throw std::invalid_argument("EmpiricalDistribution: weight count mismatch");
    if ((weights.array() < 0.0).any()) throw std::invalid_argument("EmpiricalDistribution: negative weight");
    if (std::abs(weights.sum() - 1.0) > 1e-12)
      throw std::invalid_argument("EmpiricalDistribution: weights must sum to 1");
  }
};

enum class Measure { wasserstein_exact, wasserstein_sinkhorn, mmd };

inline std::string to_string(Measure m) {
  switch (m) {
    case Measure::wasserstein_exact: return "wasserstein_exact";
    case Measure::wasserstein_sinkhorn: return "wasserstein_sinkhorn";
    case Measure::mmd: return "mmd";
  }
  return "?";
}

inline Measure parse_measure(const std::string& s) {
  if (s == "wasserstein_exact" || s == "wasserstein" || s == "exact") return Measure::wasserstein_exact;
  if (s == "wasserstein_sinkhorn" || s == "sinkhorn") return Measure::wasserstein_sinkhorn;
  if (s == "mmd") return Measure::mmd;
  throw std::invalid_argument("unknown measure '" + s + "'");
}

struct SolverMeta {
  std::size_t iterations = 0;
  double duality_gap = 0.0;
  double marginal_violation = 0.0;
  bool converged = true;
  double bandwidth = 0.0;
  std::size_t depth = 0;  // WL truncation depth, graph-level measures only
  std::string ground_metric = "euclidean";
  std::string weighting = "uniform";
};

struct DiscrepancyReport {
  double value = 0.0;
  Measure measure = Measure::wasserstein_exact;
  int p = 1;
  SolverMeta meta;
};

/// Ground distance between two points (rows); Euclidean unless overridden.
using GroundMetric = std::function<double(const Eigen::RowVectorXd&, const Eigen::RowVectorXd&)>;

struct DiscrepancyOptions {
  Measure measure = Measure::wasserstein_exact;
  int p = 1;
  double epsilon = 1e-3;
  std::size_t max_iterations = 100000;
  double bandwidth = 0.0;  // 0 selects the median heuristic
  std::size_t pair_cap = 10000;
  GroundMetric ground;
};

namespace detail {

inline void require_same_dim(const EmpiricalDistribution& a, const EmpiricalDistribution& b) {
  if (a.dim() != b.dim())
    throw std::invalid_argument("dimension mismatch: " + std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
}

inline Eigen::MatrixXd power_cost(const EmpiricalDistribution& a, const EmpiricalDistribution& b, int p,
                                  const GroundMetric& ground) {
  Eigen::MatrixXd c(a.size(), b.size());
  for (Eigen::Index i = 0; i < a.size(); ++i)
    for (Eigen::Index j = 0; j < b.size(); ++j) {
      const double d = ground ? ground(a.points.row(i), b.points.row(j)) : (a.points.row(i) - b.points.row(j)).norm();
      c(i, j) = std::pow(d, p);
    }
  return c;
}

inline std::span<const double> as_span(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

}  // namespace detail

/// Exact p-Wasserstein distance via the transportation simplex.
inline DiscrepancyReport wasserstein_exact(const EmpiricalDistribution& a, const EmpiricalDistribution& b, int p,
                                           const DiscrepancyOptions& opt = {}) {
  a.check();
  b.check();
  detail::require_same_dim(a, b);
  if (p < 1) throw std::invalid_argument("wasserstein_exact: p must be >= 1");
  const auto pairs = static_cast<std::size_t>(a.size()) * static_cast<std::size_t>(b.size());
  if (pairs > opt.pair_cap)
    throw std::invalid_argument("wasserstein_exact: " + std::to_string(pairs) + " pairs exceed the exact-solver cap of " +
                                std::to_string(opt.pair_cap) + "; use wasserstein_sinkhorn");
  const Eigen::MatrixXd cost = detail::power_cost(a, b, p, opt.ground);
  const auto sol = solve_transport_exact(detail::as_span(a.weights), detail::as_span(b.weights), cost);
  DiscrepancyReport r;
  r.measure = Measure::wasserstein_exact;
  r.p = p;
  r.value = std::pow(std::max(0.0, sol.cost), 1.0 / p);
  r.meta.iterations = sol.iterations;
  r.meta.duality_gap = sol.cost - sol.dual_objective;
  if (opt.ground) r.meta.ground_metric = "custom";
  return r;
}

/// Entropic p-Wasserstein surrogate: (<plan, cost>)^(1/p) of the Sinkhorn plan,
/// without entropic debiasing.
inline DiscrepancyReport wasserstein_sinkhorn(const EmpiricalDistribution& a, const EmpiricalDistribution& b, int p,
                                              double epsilon, std::size_t max_iterations,
                                              const DiscrepancyOptions& opt = {}) {
  a.check();
  b.check();
  detail::require_same_dim(a, b);
  if (p < 1) throw std::invalid_argument("wasserstein_sinkhorn: p must be >= 1");
  const Eigen::MatrixXd cost = detail::power_cost(a, b, p, opt.ground);
  const auto sol =
      solve_transport_sinkhorn(detail::as_span(a.weights), detail::as_span(b.weights), cost, epsilon, max_iterations);
  DiscrepancyReport r;
  r.measure = Measure::wasserstein_sinkhorn;
  r.p = p;
  r.value = std::pow(std::max(0.0, sol.cost), 1.0 / p);
  r.meta.iterations = sol.iterations;
  r.meta.marginal_violation = sol.marginal_violation;
  r.meta.converged = sol.converged;
  if (opt.ground) r.meta.ground_metric = "custom";
  return r;
}

/// Median of pairwise Euclidean distances over the pooled points (1.0 if degenerate).
inline double median_heuristic_bandwidth(const EmpiricalDistribution& a, const EmpiricalDistribution& b) {
  Eigen::MatrixXd pool(a.size() + b.size(), a.dim());
  pool << a.points, b.points;
  std::vector<double> d;
  for (Eigen::Index i = 0; i < pool.rows(); ++i)
    for (Eigen::Index j = i + 1; j < pool.rows(); ++j) d.push_back((pool.row(i) - pool.row(j)).norm());
  if (d.empty()) return 1.0;
  auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  return *mid > 0.0 ? *mid : 1.0;
}

/// Weighted Gaussian-kernel MMD. bandwidth == 0 selects the median heuristic.
inline DiscrepancyReport mmd(const EmpiricalDistribution& a, const EmpiricalDistribution& b, double bandwidth) {
  a.check();
  b.check();
  detail::require_same_dim(a, b);
  if (bandwidth < 0.0) throw std::invalid_argument("mmd: bandwidth must be positive (0 = median heuristic)");
  const double sigma = bandwidth == 0.0 ? median_heuristic_bandwidth(a, b) : bandwidth;
  const double inv = 1.0 / (2.0 * sigma * sigma);
  auto block = [&](const EmpiricalDistribution& x, const EmpiricalDistribution& y) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i)
      for (Eigen::Index j = 0; j < y.size(); ++j)
        s += x.weights(i) * y.weights(j) * std::exp(-(x.points.row(i) - y.points.row(j)).squaredNorm() * inv);
    return s;
  };
  DiscrepancyReport r;
  r.measure = Measure::mmd;
  r.value = std::sqrt(std::max(0.0, block(a, a) + block(b, b) - 2.0 * block(a, b)));
  r.meta.bandwidth = sigma;
  return r;
}

inline DiscrepancyReport base_discrepancy(const EmpiricalDistribution& a, const EmpiricalDistribution& b,
                                          const DiscrepancyOptions& opt) {
  switch (opt.measure) {
    case Measure::wasserstein_exact: return wasserstein_exact(a, b, opt.p, opt);
    case Measure::wasserstein_sinkhorn: return wasserstein_sinkhorn(a, b, opt.p, opt.epsilon, opt.max_iterations, opt);
    case Measure::mmd: return mmd(a, b, opt.bandwidth);
  }
  throw std::logic_error("unreachable");
}

/// Depth-averaged base discrepancy between two WL embeddings, each depth taken
/// as a uniform empirical distribution over node rows.
inline DiscrepancyReport graph_discrepancy(const WlEmbedding& e1, const WlEmbedding& e2, const DiscrepancyOptions& opt) {
  if (e1.per_depth.size() != e2.per_depth.size()) throw std::invalid_argument("graph_discrepancy: depth mismatch");
  DiscrepancyReport out;
  out.measure = opt.measure;
  out.p = opt.p;
  out.meta.depth = e1.depth;
  double sum = 0.0;
  for (std::size_t m = 0; m < e1.per_depth.size(); ++m) {
    const auto r = base_discrepancy(EmpiricalDistribution::uniform(e1.per_depth[m]),
                                    EmpiricalDistribution::uniform(e2.per_depth[m]), opt);
    sum += r.value;
    out.meta.iterations += r.meta.iterations;
    out.meta.duality_gap = std::max(out.meta.duality_gap, std::abs(r.meta.duality_gap));
    out.meta.marginal_violation = std::max(out.meta.marginal_violation, r.meta.marginal_violation);
    out.meta.converged = out.meta.converged && r.meta.converged;
    out.meta.bandwidth = r.meta.bandwidth;
    out.meta.ground_metric = r.meta.ground_metric;
  }
  out.value = sum / static_cast<double>(e1.per_depth.size());
  return out;
}

/// Graph discrepancy on continuous WL embeddings truncated at depth M.
inline DiscrepancyReport graph_discrepancy(const Snapshot& g1, const Snapshot& g2, std::size_t depth,
                                           const DiscrepancyOptions& opt) {
  if (g1.feature_dim() != g2.feature_dim())
    throw std::invalid_argument("graph_discrepancy: feature dims differ (" + std::to_string(g1.feature_dim()) +
                                " vs " + std::to_string(g2.feature_dim()) + ")");
  return graph_discrepancy(wl_refine_continuous(g1, depth), wl_refine_continuous(g2, depth), opt);
}

enum class TermKind { src_consecutive, src_tgt_initial, tgt_consecutive };

/// One candidate inside the dynamic distance. For consecutive terms, index i
/// (counted from 1) compares snapshot i with snapshot i+1.
struct DynTerm {
  TermKind kind = TermKind::src_tgt_initial;
  std::size_t index = 0;
  double value = 0.0;

  std::string name() const {
    switch (kind) {
      case TermKind::src_consecutive: return "src_consecutive(" + std::to_string(index) + ")";
      case TermKind::src_tgt_initial: return "src_tgt_initial";
      case TermKind::tgt_consecutive: return "tgt_consecutive(" + std::to_string(index) + ")";
    }
    return "?";
  }
};

struct DynWReport {
  double value = 0.0;
  std::size_t argmax = 0;  // index into per_term
  double rho = 1.0;
  double R = 0.0;
  std::size_t depth = 0;
  DiscrepancyOptions options;
  std::vector<DynTerm> per_term;

  const DynTerm& argmax_term() const { return per_term.at(argmax); }
  double max_term() const { return per_term.at(argmax).value; }
};

/// rho * sqrt(R^2 + 1) * max over: consecutive source snapshots, the first
/// source/target pair, and consecutive target snapshots (listed in that order;
/// ties resolve to the earliest term).
inline DynWReport dynamic_wasserstein(const DomainPair& pair, double rho, double R, std::size_t depth,
                                      const DiscrepancyOptions& opt) {
  const auto& src = pair.source.snapshots;
  const auto& tgt = pair.target.snapshots;
  if (src.empty()) throw std::invalid_argument("dynamic_wasserstein: source needs at least one snapshot");
  if (tgt.size() < src.size()) throw std::invalid_argument("dynamic_wasserstein: target is shorter than source");
  if (!(rho > 0.0) || R < 0.0) throw std::invalid_argument("dynamic_wasserstein: need rho > 0 and R >= 0");
  const std::size_t T = src.size();

  std::vector<WlEmbedding> es, et;
  for (const auto& s : src) es.push_back(wl_refine_continuous(s, depth));
  for (std::size_t i = 0; i < std::min(tgt.size(), T + 1); ++i) et.push_back(wl_refine_continuous(tgt[i], depth));

  DynWReport rep;
  rep.rho = rho;
  rep.R = R;
  rep.depth = depth;
  rep.options = opt;
  for (std::size_t i = 0; i + 1 < T; ++i)
    rep.per_term.push_back({TermKind::src_consecutive, i + 1, graph_discrepancy(es[i], es[i + 1], opt).value});
  rep.per_term.push_back({TermKind::src_tgt_initial, 1, graph_discrepancy(es[0], et[0], opt).value});
  for (std::size_t i = 0; i + 1 < et.size(); ++i)
    rep.per_term.push_back({TermKind::tgt_consecutive, i + 1, graph_discrepancy(et[i], et[i + 1], opt).value});

  for (std::size_t k = 1; k < rep.per_term.size(); ++k)
    if (rep.per_term[k].value > rep.per_term[rep.argmax].value) rep.argmax = k;
  rep.value = rho * std::sqrt(R * R + 1.0) * rep.per_term[rep.argmax].value;
  return rep;
}

}  // namespace evolunet
