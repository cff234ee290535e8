#pragma once

#include "evolunet/graph.hpp"
#include "evolunet/nn/tensor.hpp"

#include <cmath>
#include <memory>
#include <random>
#include <vector>

namespace evolunet::nn {

/// D^-1/2 (A + I) D^-1/2 with D the degree matrix of A + I.
inline SparseMatrix normalized_adjacency(std::size_t node_count, const std::vector<Edge>& edges) {
  std::vector<double> degree(node_count, 1.0);
  for (const auto& [u, v] : edges) {
    if (u >= node_count || v >= node_count) throw std::invalid_argument("normalized_adjacency: edge out of range");
    if (u == v) continue;
    degree[u] += 1.0;
    degree[v] += 1.0;
  }
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(node_count + 2 * edges.size());
  for (std::size_t v = 0; v < node_count; ++v)
    trips.emplace_back(static_cast<int>(v), static_cast<int>(v), 1.0 / degree[v]);
  for (const auto& [u, v] : edges) {
    if (u == v) continue;
    const double w = 1.0 / std::sqrt(degree[u] * degree[v]);
    trips.emplace_back(static_cast<int>(u), static_cast<int>(v), w);
    trips.emplace_back(static_cast<int>(v), static_cast<int>(u), w);
  }
  SparseMatrix a(static_cast<Eigen::Index>(node_count), static_cast<Eigen::Index>(node_count));
  a.setFromTriplets(trips.begin(), trips.end());
  return a;
}

inline SparseMatrix normalized_adjacency(const Snapshot& s) { return normalized_adjacency(s.node_count, s.edges); }

/// Stacks square blocks along the diagonal.
inline SparseMatrix block_diagonal(const std::vector<SparseMatrix>& blocks) {
  Eigen::Index total = 0;
  std::size_t nnz = 0;
  for (const auto& b : blocks) {
    if (b.rows() != b.cols()) throw std::invalid_argument("block_diagonal: blocks must be square");
    total += b.rows();
    nnz += static_cast<std::size_t>(b.nonZeros());
  }
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(nnz);
  Eigen::Index at = 0;
  for (const auto& b : blocks) {
    for (Eigen::Index r = 0; r < b.outerSize(); ++r)
      for (SparseMatrix::InnerIterator it(b, r); it; ++it)
        trips.emplace_back(static_cast<int>(at + it.row()), static_cast<int>(at + it.col()), it.value());
    at += b.rows();
  }
  SparseMatrix out(total, total);
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

/// relu(adj * x * w).
inline Tensor graph_conv(const Tensor& x, const std::shared_ptr<const SparseOperator>& adj, const Tensor& w) {
  if (adj->rows() != x.rows())
    throw std::invalid_argument("graph_conv: shape mismatch, adjacency " + std::to_string(adj->rows()) + "x" +
                                std::to_string(adj->cols()) + " vs features " + x.shape_string());
  return relu(spmm(adj, matmul(x, w)));
}

inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return add(matmul(x, w), b); }

/// softmax((h wq)(h wk)^T / sqrt(d_head)) (h wv), built from primitive ops.
inline Tensor self_attention(const Tensor& h, const Tensor& wq, const Tensor& wk, const Tensor& wv) {
  const Tensor q = matmul(h, wq), k = matmul(h, wk), v = matmul(h, wv);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(wq.cols()));
  return matmul(softmax_rows(scale(matmul(q, transpose(k)), inv_sqrt_d)), v);
}

/// Glorot-uniform initialization.
inline Matrix glorot(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = dist(rng);
  return m;
}

}  // namespace evolunet::nn
