#pragma once

#include "evolunet/graph.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <stdexcept>
#include <utility>
#include <vector>

namespace evolunet {

enum class WlMode { continuous, discrete };

/// Node representations at WL depths 0..depth.
struct WlEmbedding {
  std::vector<Eigen::MatrixXd> per_depth;
  std::size_t depth = 0;
  WlMode mode = WlMode::continuous;
};

/// Combine rule for one continuous refinement step: (own previous value,
/// neighbor mean) -> new value. Isolated nodes receive their own value as the
/// neighbor mean.
using WlCombine = std::function<Eigen::RowVectorXd(const Eigen::RowVectorXd&, const Eigen::RowVectorXd&)>;

inline Eigen::RowVectorXd wl_half_average(const Eigen::RowVectorXd& self, const Eigen::RowVectorXd& neighbor_mean) {
  return 0.5 * (self + neighbor_mean);
}

inline WlEmbedding wl_refine_continuous(const Snapshot& s, std::size_t depth, const WlCombine& combine = {}) {
  WlEmbedding out;
  out.depth = depth;
  out.mode = WlMode::continuous;
  out.per_depth.reserve(depth + 1);
  out.per_depth.push_back(s.features);
  const auto adj = s.neighbors();
  for (std::size_t m = 1; m <= depth; ++m) {
    const Eigen::MatrixXd& prev = out.per_depth.back();
    Eigen::MatrixXd next(prev.rows(), prev.cols());
    for (std::size_t v = 0; v < s.node_count; ++v) {
      const auto row = static_cast<Eigen::Index>(v);
      Eigen::RowVectorXd mean = prev.row(row);
      if (!adj[v].empty()) {
        mean.setZero();
        for (auto u : adj[v]) mean += prev.row(static_cast<Eigen::Index>(u));
        mean /= static_cast<double>(adj[v].size());
      }
      next.row(row) = combine ? combine(prev.row(row), mean) : wl_half_average(prev.row(row), mean);
    }
    out.per_depth.push_back(std::move(next));
  }
  return out;
}

/// Discrete WL symbols per depth; symbols[m][v] is the compressed label of v.
struct WlSymbols {
  std::vector<std::vector<int>> per_depth;
};

/// Classic WL relabeling. Signatures (own symbol, sorted neighbor symbols) are
/// compressed by sorted order, so isomorphic graphs get identical symbol sets.
inline WlSymbols wl_symbols(const Snapshot& s, std::size_t depth, const std::vector<int>& initial) {
  if (initial.size() != s.node_count)
    throw std::invalid_argument("wl_refine_discrete: need one initial symbol per node");
  WlSymbols out;
  auto compress = [](const auto& signatures) {
    auto sorted = signatures;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    std::vector<int> ids(signatures.size());
    for (std::size_t v = 0; v < signatures.size(); ++v)
      ids[v] = static_cast<int>(std::lower_bound(sorted.begin(), sorted.end(), signatures[v]) - sorted.begin());
    return ids;
  };
  out.per_depth.push_back(compress(initial));
  const auto adj = s.neighbors();
  for (std::size_t m = 1; m <= depth; ++m) {
    const auto& prev = out.per_depth.back();
    std::vector<std::pair<int, std::vector<int>>> sig(s.node_count);
    for (std::size_t v = 0; v < s.node_count; ++v) {
      sig[v].first = prev[v];
      for (auto u : adj[v]) sig[v].second.push_back(prev[u]);
      std::sort(sig[v].second.begin(), sig[v].second.end());
    }
    out.per_depth.push_back(compress(sig));
  }
  return out;
}

/// One-hot encoding of wl_symbols; every depth is padded to the widest depth.
inline WlEmbedding wl_refine_discrete(const Snapshot& s, std::size_t depth, const std::vector<int>& initial) {
  const WlSymbols sym = wl_symbols(s, depth, initial);
  int width = 1;
  for (const auto& d : sym.per_depth)
    for (int x : d) width = std::max(width, x + 1);
  WlEmbedding out;
  out.depth = depth;
  out.mode = WlMode::discrete;
  for (const auto& d : sym.per_depth) {
    Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(s.node_count), width);
    for (std::size_t v = 0; v < d.size(); ++v) onehot(static_cast<Eigen::Index>(v), d[v]) = 1.0;
    out.per_depth.push_back(std::move(onehot));
  }
  return out;
}

}  // namespace evolunet
