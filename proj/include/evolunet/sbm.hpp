#pragma once

#include "evolunet/graph.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace evolunet {

/// Evolving stochastic block model parameters for one domain.
struct SbmConfig {
  std::size_t block_count = 2;
  std::size_t nodes_per_block = 50;
  double intra_p = 0.1;
  double inter_p = 0.01;
  std::size_t feature_dim = 16;
  double feature_center_shift = 0.0;
  /// Block means are block_mean_scale times a block indicator over feature columns.
  double block_mean_scale = 1.0;
  double drift_rate = 0.05;
  std::size_t T = 5;
  double label_noise = 0.0;
  std::size_t few_shot_k = 5;

  std::size_t node_count() const { return block_count * nodes_per_block; }

  /// Throws std::invalid_argument naming the first broken invariant.
  void check() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("SbmConfig: " + m); };
    if (block_count < 1) fail("block_count must be >= 1");
    if (nodes_per_block < 1) fail("nodes_per_block must be >= 1");
    if (!(intra_p >= 0.0 && intra_p <= 1.0) || !(inter_p >= 0.0 && inter_p <= 1.0))
      fail("edge probabilities must lie in [0,1]");
    if (!(intra_p > inter_p)) fail("intra_p must exceed inter_p");
    if (feature_dim < 1) fail("feature_dim must be >= 1");
    if (!(drift_rate >= 0.0 && drift_rate < 1.0)) fail("drift_rate must lie in [0,1)");
    if (!(label_noise >= 0.0 && label_noise <= 1.0)) fail("label_noise must lie in [0,1]");
    if (T < 1) fail("T must be >= 1");
  }
};

namespace detail {

inline Eigen::RowVectorXd block_mean(const SbmConfig& cfg, std::size_t block) {
  Eigen::RowVectorXd mu = Eigen::RowVectorXd::Constant(static_cast<Eigen::Index>(cfg.feature_dim),
                                                       cfg.feature_center_shift);
  for (std::size_t d = 0; d < cfg.feature_dim; ++d)
    if (d % cfg.block_count == block) mu(static_cast<Eigen::Index>(d)) += cfg.block_mean_scale;
  return mu;
}

inline Snapshot sample_snapshot(const SbmConfig& cfg, const std::vector<std::size_t>& blocks,
                                double timestamp, std::mt19937_64& rng) {
  const std::size_t n = blocks.size();
  Snapshot s;
  s.node_count = n;
  s.timestamp = timestamp;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = u + 1; v < n; ++v) {
      const double p = blocks[u] == blocks[v] ? cfg.intra_p : cfg.inter_p;
      if (unit(rng) < p) s.edges.emplace_back(u, v);
    }
  std::normal_distribution<double> gauss(0.0, 1.0);
  s.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cfg.feature_dim));
  for (std::size_t v = 0; v < n; ++v) {
    const Eigen::RowVectorXd mu = block_mean(cfg, blocks[v]);
    for (std::size_t d = 0; d < cfg.feature_dim; ++d)
      s.features(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(d)) =
          mu(static_cast<Eigen::Index>(d)) + gauss(rng);
  }
  return s;
}

inline std::vector<int> noisy_labels(const SbmConfig& cfg, const std::vector<std::size_t>& blocks,
                                     std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<int> labels(blocks.size());
  for (std::size_t v = 0; v < blocks.size(); ++v) {
    labels[v] = static_cast<int>(blocks[v]);
    if (cfg.block_count > 1 && unit(rng) < cfg.label_noise) {
      std::uniform_int_distribution<std::size_t> other(0, cfg.block_count - 2);
      std::size_t c = other(rng);
      if (c >= blocks[v]) ++c;
      labels[v] = static_cast<int>(c);
    }
  }
  return labels;
}

/// Reassigns round(drift_rate * n) distinct nodes to a different block.
inline void drift_blocks(const SbmConfig& cfg, std::vector<std::size_t>& blocks, std::mt19937_64& rng) {
  if (cfg.block_count < 2) return;
  const auto moves = static_cast<std::size_t>(std::llround(cfg.drift_rate * static_cast<double>(blocks.size())));
  std::vector<std::size_t> order(blocks.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::uniform_int_distribution<std::size_t> other(0, cfg.block_count - 2);
  for (std::size_t k = 0; k < moves && k < order.size(); ++k) {
    std::size_t b = other(rng);
    if (b >= blocks[order[k]]) ++b;
    blocks[order[k]] = b;
  }
}

inline DynamicGraph generate_domain(const SbmConfig& cfg, std::size_t snapshot_count,
                                    const std::vector<double>& timestamps, DomainTag tag,
                                    std::mt19937_64& rng, std::vector<std::vector<int>>& all_labels) {
  DynamicGraph g;
  g.feature_dim = cfg.feature_dim;
  g.class_count = cfg.block_count;
  g.domain_tag = tag;
  std::vector<std::size_t> blocks(cfg.node_count());
  for (std::size_t v = 0; v < blocks.size(); ++v) blocks[v] = v / cfg.nodes_per_block;
  for (std::size_t i = 0; i < snapshot_count; ++i) {
    if (i > 0) drift_blocks(cfg, blocks, rng);
    g.snapshots.push_back(sample_snapshot(cfg, blocks, timestamps[i], rng));
    all_labels.push_back(noisy_labels(cfg, blocks, rng));
  }
  return g;
}

}  // namespace detail

/// Samples a source/target pair of evolving SBMs. The target always gets
/// src_cfg.T + 1 snapshots; tgt_cfg.T is ignored. Source snapshots are fully
/// labeled; target snapshots 0..T-1 label only the few-shot nodes and the last
/// target snapshot labels every node.
inline DomainPair generate_evolving_sbm(const SbmConfig& src_cfg, const SbmConfig& tgt_cfg,
                                       std::uint64_t seed) {
  src_cfg.check();
  tgt_cfg.check();
  const std::size_t T = src_cfg.T;
  std::mt19937_64 rng(seed);

  // Irregular but shared continuous timestamps.
  std::vector<double> timestamps(T + 1);
  std::uniform_real_distribution<double> gap(0.5, 1.5);
  double t = 0.0;
  for (auto& ts : timestamps) ts = (t += gap(rng));

  DomainPair pair;
  std::vector<std::vector<int>> src_labels, tgt_labels;
  pair.source = detail::generate_domain(src_cfg, T, timestamps, DomainTag::source, rng, src_labels);
  pair.target = detail::generate_domain(tgt_cfg, T + 1, timestamps, DomainTag::target, rng, tgt_labels);

  for (std::size_t i = 0; i < T; ++i)
    for (std::size_t v = 0; v < src_labels[i].size(); ++v)
      pair.source.snapshots[i].labels[v] = src_labels[i][v];

  const auto& last = tgt_labels.back();
  std::vector<std::vector<std::size_t>> by_class(tgt_cfg.block_count);
  for (std::size_t v = 0; v < last.size(); ++v) by_class[static_cast<std::size_t>(last[v])].push_back(v);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& members = by_class[c];
    if (members.size() <= tgt_cfg.few_shot_k)
      throw std::invalid_argument("SbmConfig: class " + std::to_string(c) + " has only " +
                                  std::to_string(members.size()) + " nodes at T+1, need more than few_shot_k=" +
                                  std::to_string(tgt_cfg.few_shot_k));
    std::shuffle(members.begin(), members.end(), rng);
    pair.few_shot_train.insert(pair.few_shot_train.end(), members.begin(),
                               members.begin() + static_cast<std::ptrdiff_t>(tgt_cfg.few_shot_k));
  }
  std::sort(pair.few_shot_train.begin(), pair.few_shot_train.end());
  for (std::size_t v = 0; v < last.size(); ++v) {
    pair.target.snapshots.back().labels[v] = last[v];
    if (!std::binary_search(pair.few_shot_train.begin(), pair.few_shot_train.end(), v))
      pair.held_out_eval.push_back(v);
  }
  for (std::size_t i = 0; i < T; ++i)
    for (auto v : pair.few_shot_train) pair.target.snapshots[i].labels[v] = tgt_labels[i][v];
  return pair;
}

}  // namespace evolunet
