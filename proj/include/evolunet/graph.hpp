#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace evolunet {

using Edge = std::pair<std::size_t, std::size_t>;

enum class DomainTag { source, target };

inline std::string to_string(DomainTag tag) { return tag == DomainTag::source ? "source" : "target"; }

inline DomainTag parse_domain_tag(const std::string& s) {
  if (s == "source") return DomainTag::source;
  if (s == "target") return DomainTag::target;
  throw std::invalid_argument("unknown domain_tag '" + s + "'");
}

/// One timestamped observation of an undirected attributed graph.
/// Edges are stored once with u < v; labels may cover any subset of nodes.
struct Snapshot {
  std::size_t node_count = 0;
  std::vector<Edge> edges;
  Eigen::MatrixXd features;  // node_count x feature_dim
  std::map<std::size_t, int> labels;
  double timestamp = 0.0;

  std::size_t feature_dim() const { return static_cast<std::size_t>(features.cols()); }

  /// Adjacency lists in ascending neighbor order.
  std::vector<std::vector<std::size_t>> neighbors() const {
    std::vector<std::vector<std::size_t>> adj(node_count);
    for (const auto& [u, v] : edges) {
      if (u >= node_count || v >= node_count || u == v) continue;
      adj[u].push_back(v);
      adj[v].push_back(u);
    }
    for (auto& list : adj) std::sort(list.begin(), list.end());
    return adj;
  }

  bool operator==(const Snapshot& o) const {
    return node_count == o.node_count && edges == o.edges && labels == o.labels &&
           timestamp == o.timestamp && features.rows() == o.features.rows() &&
           features.cols() == o.features.cols() && features == o.features;
  }
};

struct DynamicGraph {
  std::vector<Snapshot> snapshots;
  std::size_t feature_dim = 1;
  std::size_t class_count = 1;
  DomainTag domain_tag = DomainTag::source;

  bool operator==(const DynamicGraph&) const = default;
};

/// Source with T snapshots, target with T+1; the last target snapshot's
/// labels are split into few-shot training nodes and held-out evaluation nodes.
struct DomainPair {
  DynamicGraph source;
  DynamicGraph target;
  std::vector<std::size_t> few_shot_train;
  std::vector<std::size_t> held_out_eval;

  std::size_t horizon() const { return source.snapshots.size(); }

  bool operator==(const DomainPair&) const = default;
};

struct Violation {
  std::optional<std::size_t> snapshot;  // empty for graph-level violations
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }

  std::string summary() const {
    std::ostringstream out;
    for (const auto& v : violations) out << v.message << '\n';
    return out.str();
  }
};

namespace detail {

inline void add_violation(ValidationReport& report, std::optional<std::size_t> snapshot,
                          const std::string& what) {
  std::string msg = what;
  if (snapshot) msg += " at snapshot " + std::to_string(*snapshot);
  report.violations.push_back({snapshot, std::move(msg)});
}

inline void validate_snapshot(const Snapshot& s, std::size_t index, std::size_t feature_dim,
                              std::size_t class_count, ValidationReport& report) {
  if (s.node_count == 0) add_violation(report, index, "empty node set");
  std::set<Edge> seen;
  for (const auto& [u, v] : s.edges) {
    const std::string pair = "(" + std::to_string(u) + "," + std::to_string(v) + ")";
    if (u >= s.node_count || v >= s.node_count) {
      add_violation(report, index, "edge endpoint out of range " + pair);
      continue;
    }
    if (u == v) {
      add_violation(report, index, "self-loop " + pair);
      continue;
    }
    if (u > v) add_violation(report, index, "edge not stored as u < v " + pair);
    if (!seen.insert({std::min(u, v), std::max(u, v)}).second)
      add_violation(report, index, "duplicate edge " + pair);
  }
  if (static_cast<std::size_t>(s.features.rows()) != s.node_count)
    add_violation(report, index,
                  "feature rows " + std::to_string(s.features.rows()) + " != node_count " +
                      std::to_string(s.node_count));
  if (static_cast<std::size_t>(s.features.cols()) != feature_dim)
    add_violation(report, index,
                  "feature columns " + std::to_string(s.features.cols()) + " != feature_dim " +
                      std::to_string(feature_dim));
  if (!s.features.allFinite()) add_violation(report, index, "non-finite feature value");
  for (const auto& [node, label] : s.labels) {
    if (node >= s.node_count)
      add_violation(report, index, "label for out-of-range node " + std::to_string(node));
    if (label < 0 || static_cast<std::size_t>(label) >= class_count)
      add_violation(report, index,
                    "label " + std::to_string(label) + " of node " + std::to_string(node) +
                        " outside class_count " + std::to_string(class_count));
  }
}

}  // namespace detail

/// Lists every violated invariant; never throws.
inline ValidationReport validate_dynamic_graph(const DynamicGraph& g) {
  ValidationReport report;
  if (g.feature_dim == 0) detail::add_violation(report, std::nullopt, "feature_dim must be >= 1");
  if (g.class_count == 0) detail::add_violation(report, std::nullopt, "class_count must be >= 1");
  for (std::size_t i = 0; i < g.snapshots.size(); ++i) {
    detail::validate_snapshot(g.snapshots[i], i, g.feature_dim, g.class_count, report);
    if (i > 0 && !(g.snapshots[i].timestamp > g.snapshots[i - 1].timestamp))
      detail::add_violation(report, i, "non-increasing timestamps");
  }
  return report;
}

inline ValidationReport validate_domain_pair(const DomainPair& pair) {
  ValidationReport report = validate_dynamic_graph(pair.source);
  for (auto& v : validate_dynamic_graph(pair.target).violations) {
    v.message = "target: " + v.message;
    report.violations.push_back(std::move(v));
  }
  if (pair.source.domain_tag != DomainTag::source)
    detail::add_violation(report, std::nullopt, "source graph tagged as target");
  if (pair.target.domain_tag != DomainTag::target)
    detail::add_violation(report, std::nullopt, "target graph tagged as source");
  if (pair.source.snapshots.size() + 1 != pair.target.snapshots.size()) {
    detail::add_violation(report, std::nullopt,
                          "target must have exactly one more snapshot than source (" +
                              std::to_string(pair.source.snapshots.size()) + " vs " +
                              std::to_string(pair.target.snapshots.size()) + ")");
    return report;
  }
  const auto& last = pair.target.snapshots.back();
  std::set<std::size_t> train(pair.few_shot_train.begin(), pair.few_shot_train.end());
  for (auto v : pair.held_out_eval)
    if (train.count(v))
      detail::add_violation(report, std::nullopt,
                            "node " + std::to_string(v) + " is in both few-shot and held-out sets");
  for (const auto* set : {&pair.few_shot_train, &pair.held_out_eval})
    for (auto v : *set)
      if (!last.labels.count(v))
        detail::add_violation(report, std::nullopt,
                              "split node " + std::to_string(v) + " is unlabeled at the last target snapshot");
  return report;
}

/// Throws unless every snapshot of g has the same node count (required by the neural pipeline).
inline std::size_t require_constant_node_count(const DynamicGraph& g) {
  if (g.snapshots.empty()) throw std::invalid_argument(to_string(g.domain_tag) + " graph has no snapshots");
  const std::size_t n = g.snapshots.front().node_count;
  for (std::size_t i = 1; i < g.snapshots.size(); ++i)
    if (g.snapshots[i].node_count != n)
      throw std::invalid_argument(to_string(g.domain_tag) + " node count changes at snapshot " +
                                  std::to_string(i) + " (" + std::to_string(n) + " -> " +
                                  std::to_string(g.snapshots[i].node_count) + ")");
  return n;
}

struct SnapshotStats {
  std::size_t node_count = 0;
  std::size_t edge_count = 0;
  std::size_t labeled_count = 0;
  double label_coverage = 0.0;
  double density = 0.0;
};

inline SnapshotStats snapshot_stats(const Snapshot& s) {
  SnapshotStats st;
  st.node_count = s.node_count;
  st.edge_count = s.edges.size();
  st.labeled_count = s.labels.size();
  if (s.node_count > 0) st.label_coverage = static_cast<double>(s.labels.size()) / s.node_count;
  if (s.node_count > 1)
    st.density = 2.0 * static_cast<double>(s.edges.size()) /
                 (static_cast<double>(s.node_count) * static_cast<double>(s.node_count - 1));
  return st;
}

inline std::vector<SnapshotStats> snapshot_stats(const DynamicGraph& g) {
  std::vector<SnapshotStats> out;
  out.reserve(g.snapshots.size());
  for (const auto& s : g.snapshots) out.push_back(snapshot_stats(s));
  return out;
}

}  // namespace evolunet
