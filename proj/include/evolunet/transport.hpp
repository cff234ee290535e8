#pragma once

// Discrete optimal transport between weighted point sets: an exact
// transportation simplex (network simplex on the complete bipartite graph) and
// a log-domain Sinkhorn solver with epsilon scaling.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace evolunet {

struct TransportCell {
  std::size_t row = 0;
  std::size_t col = 0;
  double mass = 0.0;
};

struct ExactTransportResult {
  std::vector<TransportCell> basis;  // spanning-tree cells, including degenerate zeros
  double cost = 0.0;                 // sum of mass * cost over the plan
  double dual_objective = 0.0;
  std::size_t iterations = 0;
  std::size_t degenerate_pivots = 0;
};

namespace detail {

struct TransportTree {
  std::size_t rows, cols;
  std::vector<TransportCell> cells;
  std::vector<std::vector<std::size_t>> incident;  // node -> cell indices; rows first, then columns

  void rebuild() {
    incident.assign(rows + cols, {});
    for (std::size_t k = 0; k < cells.size(); ++k) {
      incident[cells[k].row].push_back(k);
      incident[rows + cells[k].col].push_back(k);
    }
  }

  std::size_t other_end(std::size_t cell, std::size_t node) const {
    const auto& c = cells[cell];
    return node == c.row ? rows + c.col : c.row;
  }
};

/// Northwest-corner start; always yields rows + cols - 1 cells forming a spanning tree.
inline std::vector<TransportCell> northwest_corner(std::span<const double> supply, std::span<const double> demand) {
  std::vector<TransportCell> cells;
  std::vector<double> a(supply.begin(), supply.end()), b(demand.begin(), demand.end());
  std::size_t i = 0, j = 0;
  const std::size_t n = a.size(), m = b.size();
  while (i < n && j < m) {
    const double x = std::min(a[i], b[j]);
    cells.push_back({i, j, x});
    a[i] -= x;
    b[j] -= x;
    if (i == n - 1 && j == m - 1) break;
    if (j == m - 1 || (i < n - 1 && a[i] <= b[j])) ++i;
    else ++j;
  }
  return cells;
}

}  // namespace detail

/// Exact transportation problem: minimize sum x_ij c_ij subject to row sums =
/// supply and column sums = demand. Dantzig pricing with lowest-index tie
/// breaking; switches to Bland's rule after a run of degenerate pivots.
inline ExactTransportResult solve_transport_exact(std::span<const double> supply, std::span<const double> demand,
                                                  const Eigen::MatrixXd& cost) {
  const std::size_t n = supply.size(), m = demand.size();
  if (n == 0 || m == 0) throw std::invalid_argument("transport: empty marginal");
  if (static_cast<std::size_t>(cost.rows()) != n || static_cast<std::size_t>(cost.cols()) != m)
    throw std::invalid_argument("transport: cost matrix shape does not match marginals");

  detail::TransportTree tree{n, m, detail::northwest_corner(supply, demand), {}};
  const double scale = std::max(1.0, cost.cwiseAbs().maxCoeff());
  const double tol = 1e-12 * scale;
  const std::size_t max_iterations = 50 * (n + m) * (n + m) + 1000;
  std::vector<double> u(n), v(m);
  std::vector<char> seen(n + m);
  std::vector<std::size_t> parent_cell(n + m), stack;
  std::size_t degenerate_run = 0;
  ExactTransportResult res;

  for (;;) {
    tree.rebuild();
    // Potentials: u_i + v_j = c_ij on every tree cell, rooted at row 0.
    std::fill(seen.begin(), seen.end(), 0);
    stack.assign(1, 0);
    seen[0] = 1;
    u[0] = 0.0;
    while (!stack.empty()) {
      const std::size_t node = stack.back();
      stack.pop_back();
      for (auto k : tree.incident[node]) {
        const std::size_t next = tree.other_end(k, node);
        if (seen[next]) continue;
        seen[next] = 1;
        const auto& c = tree.cells[k];
        const double ck = cost(static_cast<Eigen::Index>(c.row), static_cast<Eigen::Index>(c.col));
        if (next >= n) v[next - n] = ck - u[c.row];
        else u[next] = ck - v[c.col];
        stack.push_back(next);
      }
    }

    const bool bland = degenerate_run > 2 * (n + m);
    std::size_t enter_i = n, enter_j = m;
    double best = -tol;
    for (std::size_t i = 0; i < n && !(bland && enter_i < n); ++i)
      for (std::size_t j = 0; j < m; ++j) {
        const double r = cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) - u[i] - v[j];
        if (r < best) {
          best = r;
          enter_i = i;
          enter_j = j;
          if (bland) break;
        }
      }
    if (enter_i == n) break;
    if (++res.iterations > max_iterations) throw std::runtime_error("transport: iteration limit reached");

    // Tree path from row enter_i to column enter_j.
    std::fill(seen.begin(), seen.end(), 0);
    stack.assign(1, enter_i);
    seen[enter_i] = 1;
    const std::size_t goal = n + enter_j;
    while (!stack.empty() && !seen[goal]) {
      const std::size_t node = stack.back();
      stack.pop_back();
      for (auto k : tree.incident[node]) {
        const std::size_t next = tree.other_end(k, node);
        if (seen[next]) continue;
        seen[next] = 1;
        parent_cell[next] = k;
        stack.push_back(next);
      }
    }
    // Walk back from the column; cells alternate -, +, -, ... ending with - at row enter_i.
    std::vector<std::size_t> path;
    for (std::size_t node = goal; node != enter_i;) {
      const std::size_t k = parent_cell[node];
      path.push_back(k);
      node = tree.other_end(k, node);
    }
    double theta = std::numeric_limits<double>::infinity();
    std::size_t leave = path.size();
    for (std::size_t t = 0; t < path.size(); t += 2) {
      const auto& c = tree.cells[path[t]];
      const bool better = c.mass < theta ||
                          (c.mass == theta && (c.row * m + c.col) < (tree.cells[path[leave]].row * m +
                                                                      tree.cells[path[leave]].col));
      if (better) {
        theta = c.mass;
        leave = t;
      }
    }
    if (theta == 0.0) ++res.degenerate_pivots, ++degenerate_run;
    else degenerate_run = 0;
    for (std::size_t t = 0; t < path.size(); ++t) tree.cells[path[t]].mass += (t % 2 == 0 ? -theta : theta);
    const std::size_t leaving_cell = path[leave];
    tree.cells[leaving_cell] = {enter_i, enter_j, theta};
  }

  for (auto& c : tree.cells) c.mass = std::max(0.0, c.mass);
  for (const auto& c : tree.cells)
    res.cost += c.mass * cost(static_cast<Eigen::Index>(c.row), static_cast<Eigen::Index>(c.col));
  for (std::size_t i = 0; i < n; ++i) res.dual_objective += supply[i] * u[i];
  for (std::size_t j = 0; j < m; ++j) res.dual_objective += demand[j] * v[j];
  res.basis = std::move(tree.cells);
  return res;
}

struct SinkhornResult {
  Eigen::MatrixXd plan;
  double cost = 0.0;                // <plan, cost>, no entropy term
  double marginal_violation = 0.0;  // L1 distance of plan row sums to the supply
  std::size_t iterations = 0;
  bool converged = false;
};

namespace detail {

inline double log_sum_exp(const double* xs, std::size_t n, std::size_t stride) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < n; ++k) mx = std::max(mx, xs[k * stride]);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) s += std::exp(xs[k * stride] - mx);
  return mx + std::log(s);
}

}  // namespace detail

/// Entropic OT in the log domain. Epsilon is annealed geometrically from the
/// largest cost down to the requested value, warm-starting the potentials.
/// Converged means the row-marginal violation fell below tolerance at the
/// requested epsilon.
inline SinkhornResult solve_transport_sinkhorn(std::span<const double> supply, std::span<const double> demand,
                                               const Eigen::MatrixXd& cost, double epsilon,
                                               std::size_t max_iterations, double tolerance = 1e-6) {
  const auto n = static_cast<Eigen::Index>(supply.size());
  const auto m = static_cast<Eigen::Index>(demand.size());
  if (!(epsilon > 0.0)) throw std::invalid_argument("sinkhorn: epsilon must be positive");
  if (cost.rows() != n || cost.cols() != m) throw std::invalid_argument("sinkhorn: cost shape mismatch");

  Eigen::VectorXd log_a(n), log_b(m), f = Eigen::VectorXd::Zero(n), g = Eigen::VectorXd::Zero(m);
  for (Eigen::Index i = 0; i < n; ++i) log_a(i) = std::log(supply[static_cast<std::size_t>(i)]);
  for (Eigen::Index j = 0; j < m; ++j) log_b(j) = std::log(demand[static_cast<std::size_t>(j)]);

  // Row-major scratch so both reductions are contiguous-ish loops.
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> scratch(n, m);
  SinkhornResult res;
  auto row_violation = [&](double eps) {
    double viol = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double row = 0.0;
      for (Eigen::Index j = 0; j < m; ++j) row += std::exp((f(i) + g(j) - cost(i, j)) / eps);
      viol += std::abs(row - supply[static_cast<std::size_t>(i)]);
    }
    return viol;
  };

  double eps = std::max(epsilon, cost.maxCoeff());
  for (;;) {
    const bool last_stage = eps <= epsilon;
    const double stage_tol = last_stage ? tolerance : std::max(tolerance, 1e-3);
    bool stage_done = false;
    while (res.iterations < max_iterations) {
      ++res.iterations;
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < m; ++j) scratch(i, j) = (g(j) - cost(i, j)) / eps;
      for (Eigen::Index i = 0; i < n; ++i)
        f(i) = eps * log_a(i) - eps * detail::log_sum_exp(&scratch(i, 0), static_cast<std::size_t>(m), 1);
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < m; ++j) scratch(i, j) = (f(i) - cost(i, j)) / eps;
      for (Eigen::Index j = 0; j < m; ++j)
        g(j) = eps * log_b(j) -
               eps * detail::log_sum_exp(&scratch(0, j), static_cast<std::size_t>(n), static_cast<std::size_t>(m));
      if (res.iterations % 10 == 0 || last_stage) {
        res.marginal_violation = row_violation(eps);
        if (res.marginal_violation < stage_tol) {
          stage_done = true;
          break;
        }
      }
    }
    if (last_stage || !stage_done) break;
    eps = std::max(epsilon, eps * 0.5);
  }

  res.plan.resize(n, m);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < m; ++j) res.plan(i, j) = std::exp((f(i) + g(j) - cost(i, j)) / eps);
  res.cost = (res.plan.array() * cost.array()).sum();
  res.marginal_violation = row_violation(eps);
  res.converged = eps <= epsilon && res.marginal_violation < tolerance;
  return res;
}

}  // namespace evolunet
