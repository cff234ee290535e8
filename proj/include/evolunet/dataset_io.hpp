#pragma once

// Dataset directory layout, one directory per domain:
//
//   manifest            key = value text (domain_tag, T, feature_dim, class_count,
//                       timestamps, and for targets few_shot_train / held_out_eval)
//   t<i>/edges.csv      rows "u,v"
//   t<i>/features.csv   node_count rows of feature_dim reals
//   t<i>/labels.csv     rows "node,label" (may be empty)
//
// Snapshot directories are numbered from 0. Reals use 17 significant digits.

#include "evolunet/graph.hpp"
#include "evolunet/kv.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>

namespace evolunet {

namespace fs = std::filesystem;

namespace detail {

inline std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
  return out;
}

inline std::string join_indices(const std::vector<std::size_t>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? ", " : "") + std::to_string(xs[i]);
  return out;
}

inline std::vector<std::size_t> parse_indices(const std::string& s, std::size_t line) {
  std::vector<std::size_t> out;
  if (trim(s).empty()) return out;
  for (const auto& item : split(s, ',')) {
    const long long v = parse_integer(item, line);
    if (v < 0) throw ParseError(line, "negative index " + item);
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

inline std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::ifstream in(p);
  if (!in) return rows;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    rows.push_back(split(trim(line), ','));
  }
  return rows;
}

}  // namespace detail

inline void write_dynamic_graph(const DynamicGraph& g, const fs::path& dir, std::size_t horizon,
                                const std::vector<std::size_t>* few_shot = nullptr,
                                const std::vector<std::size_t>* held_out = nullptr) {
  fs::create_directories(dir);
  {
    auto out = detail::open_out(dir / "manifest");
    out << "domain_tag = " << to_string(g.domain_tag) << '\n';
    out << "T = " << horizon << '\n';
    out << "feature_dim = " << g.feature_dim << '\n';
    out << "class_count = " << g.class_count << '\n';
    std::vector<double> ts;
    for (const auto& s : g.snapshots) ts.push_back(s.timestamp);
    out << "timestamps = " << join_reals(ts) << '\n';
    if (few_shot) out << "few_shot_train = " << detail::join_indices(*few_shot) << '\n';
    if (held_out) out << "held_out_eval = " << detail::join_indices(*held_out) << '\n';
  }
  for (std::size_t i = 0; i < g.snapshots.size(); ++i) {
    const auto& s = g.snapshots[i];
    const fs::path sub = dir / ("t" + std::to_string(i));
    fs::create_directories(sub);
    auto edges = detail::open_out(sub / "edges.csv");
    for (const auto& [u, v] : s.edges) edges << u << ',' << v << '\n';
    auto feats = detail::open_out(sub / "features.csv");
    for (Eigen::Index r = 0; r < s.features.rows(); ++r) {
      for (Eigen::Index c = 0; c < s.features.cols(); ++c)
        feats << (c ? "," : "") << format_real(s.features(r, c));
      feats << '\n';
    }
    auto labels = detail::open_out(sub / "labels.csv");
    for (const auto& [node, label] : s.labels) labels << node << ',' << label << '\n';
  }
}

inline void write_domain_pair(const DomainPair& pair, const fs::path& dir) {
  write_dynamic_graph(pair.source, dir / "source", pair.horizon());
  write_dynamic_graph(pair.target, dir / "target", pair.horizon(), &pair.few_shot_train, &pair.held_out_eval);
}

struct LoadedGraph {
  DynamicGraph graph;
  std::size_t horizon = 0;
  std::vector<std::size_t> few_shot_train;
  std::vector<std::size_t> held_out_eval;
};

/// Reads one domain directory. Edges given in both orientations are rejected
/// as directed input; a single row with u > v is stored as (v, u).
inline LoadedGraph read_dynamic_graph(const fs::path& dir) {
  LoadedGraph out;
  const auto entries = parse_kv_file((dir / "manifest").string());
  std::vector<double> timestamps;
  bool have_ts = false;
  for (const auto& e : entries) {
    if (e.key == "domain_tag") out.graph.domain_tag = parse_domain_tag(e.value);
    else if (e.key == "T") out.horizon = static_cast<std::size_t>(parse_integer(e.value, e.line));
    else if (e.key == "feature_dim") out.graph.feature_dim = static_cast<std::size_t>(parse_integer(e.value, e.line));
    else if (e.key == "class_count") out.graph.class_count = static_cast<std::size_t>(parse_integer(e.value, e.line));
    else if (e.key == "timestamps") timestamps = parse_real_list(e.value, e.line), have_ts = true;
    else if (e.key == "few_shot_train") out.few_shot_train = detail::parse_indices(e.value, e.line);
    else if (e.key == "held_out_eval") out.held_out_eval = detail::parse_indices(e.value, e.line);
    else if (e.key == "directed") {
      if (e.value != "false") throw ParseError(e.line, "directed graphs are not supported");
    } else throw ParseError(e.line, "unknown manifest key '" + e.key + "'");
  }
  if (!have_ts) throw std::runtime_error("manifest in '" + dir.string() + "' lacks timestamps");
  for (std::size_t i = 0; i < timestamps.size(); ++i) {
    const fs::path sub = dir / ("t" + std::to_string(i));
    if (!fs::is_directory(sub)) throw std::runtime_error("missing snapshot directory '" + sub.string() + "'");
    Snapshot s;
    s.timestamp = timestamps[i];
    const auto feat_rows = detail::read_csv(sub / "features.csv");
    s.node_count = feat_rows.size();
    s.features.resize(static_cast<Eigen::Index>(feat_rows.size()), static_cast<Eigen::Index>(out.graph.feature_dim));
    for (std::size_t r = 0; r < feat_rows.size(); ++r) {
      if (feat_rows[r].size() != out.graph.feature_dim)
        throw ParseError(r + 1, sub.string() + "/features.csv: expected " + std::to_string(out.graph.feature_dim) +
                                    " columns, got " + std::to_string(feat_rows[r].size()));
      for (std::size_t c = 0; c < feat_rows[r].size(); ++c)
        s.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = parse_real(feat_rows[r][c], r + 1);
    }
    std::set<Edge> seen;
    std::size_t line = 0;
    for (const auto& row : detail::read_csv(sub / "edges.csv")) {
      ++line;
      if (row.size() != 2) throw ParseError(line, sub.string() + "/edges.csv: expected 'u,v'");
      const long long a = parse_integer(row[0], line), b = parse_integer(row[1], line);
      if (a < 0 || b < 0) throw ParseError(line, sub.string() + "/edges.csv: negative node index");
      Edge e{static_cast<std::size_t>(a), static_cast<std::size_t>(b)};
      if (seen.count({e.second, e.first}) && e.first != e.second)
        throw ParseError(line, sub.string() + "/edges.csv: edge given in both directions (directed input)");
      seen.insert(e);
      if (e.first > e.second) std::swap(e.first, e.second);
      s.edges.push_back(e);
    }
    line = 0;
    for (const auto& row : detail::read_csv(sub / "labels.csv")) {
      ++line;
      if (row.size() != 2) throw ParseError(line, sub.string() + "/labels.csv: expected 'node,label'");
      const long long node = parse_integer(row[0], line);
      if (node < 0) throw ParseError(line, sub.string() + "/labels.csv: negative node index");
      s.labels[static_cast<std::size_t>(node)] = static_cast<int>(parse_integer(row[1], line));
    }
    out.graph.snapshots.push_back(std::move(s));
  }
  return out;
}

inline DomainPair read_domain_pair(const fs::path& source_dir, const fs::path& target_dir) {
  DomainPair pair;
  auto src = read_dynamic_graph(source_dir);
  auto tgt = read_dynamic_graph(target_dir);
  pair.source = std::move(src.graph);
  pair.target = std::move(tgt.graph);
  pair.few_shot_train = std::move(tgt.few_shot_train);
  pair.held_out_eval = std::move(tgt.held_out_eval);
  return pair;
}

inline DomainPair read_domain_pair(const fs::path& dir) {
  return read_domain_pair(dir / "source", dir / "target");
}

}  // namespace evolunet
