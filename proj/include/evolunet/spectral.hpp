#pragma once

#include "evolunet/graph.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace evolunet {

struct EeeResult {
  Eigen::MatrixXd vectors;  // node_count x k
  Eigen::VectorXd singular_values;
  bool rank_deficient = false;  // some columns were zero-filled
  std::size_t iterations = 0;
};

struct PowerIterationOptions {
  std::size_t max_iterations = 200000;
  double tolerance = 1e-14;
  double rank_tolerance = 1e-10;  // relative to the leading singular value
};

namespace detail {

/// Makes the first entry of (near-)largest magnitude positive. Entries within
/// 1e-9 of the maximum count as tied, so symmetric vectors get a stable sign.
inline void normalize_sign(Eigen::Ref<Eigen::VectorXd> v) {
  const double top = v.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (std::abs(v(i)) >= top - 1e-9) {
      if (v(i) < 0) v = -v;
      return;
    }
}

}  // namespace detail

/// Top-k left singular vectors of the adjacency matrix by power iteration on
/// A*A^T with projection deflation against the vectors already found. Each
/// column is unit norm with its largest-magnitude entry positive.
inline EeeResult eee_components(const Snapshot& s, std::size_t k, const PowerIterationOptions& opt = {}) {
  const std::size_t n = s.node_count;
  if (k < 1 || k > n) throw std::invalid_argument("eee_components: need 1 <= k <= node_count");
  const auto adj = s.neighbors();
  auto apply_adj = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    for (std::size_t u = 0; u < n; ++u)
      for (auto v : adj[u]) y(static_cast<Eigen::Index>(u)) += x(static_cast<Eigen::Index>(v));
    return y;
  };
  // A is symmetric, so A*A^T x = A(Ax).
  auto apply_gram = [&](const Eigen::VectorXd& x) { return apply_adj(apply_adj(x)); };

  EeeResult out;
  out.vectors = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
  out.singular_values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
  std::mt19937_64 rng(0x5eedULL);
  std::normal_distribution<double> gauss;
  double leading = 0.0;

  for (std::size_t c = 0; c < k; ++c) {
    const auto col = static_cast<Eigen::Index>(c);
    auto deflate = [&](Eigen::VectorXd& x) {
      for (Eigen::Index j = 0; j < col; ++j) x -= out.vectors.col(j).dot(x) * out.vectors.col(j);
    };
    Eigen::VectorXd x(static_cast<Eigen::Index>(n));
    for (auto& e : x) e = gauss(rng);
    deflate(x);
    bool found = x.norm() > 0.0;
    if (found) x.normalize();
    for (std::size_t it = 0; found && it < opt.max_iterations; ++it) {
      ++out.iterations;
      Eigen::VectorXd y = apply_gram(x);
      deflate(y);
      const double norm = y.norm();
      if (norm == 0.0) {
        found = false;
        break;
      }
      // Eigen-residual of the current direction, relative to its Rayleigh quotient.
      const double rayleigh = x.dot(y);
      const double residual = (y - rayleigh * x).norm() / norm;
      x = y / norm;
      if (residual < opt.tolerance) break;
    }
    const double sigma = found ? std::sqrt(x.dot(apply_gram(x))) : 0.0;
    if (c == 0) leading = sigma;
    if (!found || sigma <= opt.rank_tolerance * std::max(leading, 1.0)) {
      out.rank_deficient = true;
      for (std::size_t rest = c; rest < k; ++rest) out.vectors.col(static_cast<Eigen::Index>(rest)).setZero();
      break;
    }
    // A shares the singular value with eigenvalues +sigma and -sigma when both
    // occur; the +sigma eigenvector comes first.
    const Eigen::VectorXd ax = apply_adj(x) / sigma;
    Eigen::VectorXd plus = x + ax, minus = x - ax;
    deflate(plus);
    deflate(minus);
    if (plus.norm() <= 1e-6) x = minus.normalized();
    else if (minus.norm() <= 1e-6) x = plus.normalized();
    else {
      plus.normalize();
      minus.normalize();
      const double gain_plus = apply_adj(plus).norm(), gain_minus = apply_adj(minus).norm();
      x = gain_plus >= gain_minus - 1e-9 * sigma ? plus : minus;
    }
    detail::normalize_sign(x);
    out.vectors.col(col) = x;
    out.singular_values(col) = sigma;
  }
  return out;
}

}  // namespace evolunet
