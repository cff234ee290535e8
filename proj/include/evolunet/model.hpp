#pragma once

// EvoluNet forward pass. Per domain: input MLP -> shared graph-conv stack per
// snapshot (spatial embeddings) -> random-walk context -> projection plus
// continuous-time positional encoding -> shared attention over each node's
// timestamps -> mean. Gradient-reversed domain classifiers sit on the spatial
// embeddings and on the per-timestamp attention rows.
//
// Snapshots of one domain are stacked step-major: row i * N + v is node v at
// snapshot i.

#include "evolunet/graph.hpp"
#include "evolunet/nn/checkpoint.hpp"
#include "evolunet/nn/layers.hpp"
#include "evolunet/nn/tensor.hpp"
#include "evolunet/rng.hpp"

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace evolunet {

enum class Aggregation { attention_mean, plain_sum };

inline std::string to_string(Aggregation a) { return a == Aggregation::attention_mean ? "attention_mean" : "plain_sum"; }

inline Aggregation parse_aggregation(const std::string& s) {
  if (s == "attention_mean") return Aggregation::attention_mean;
  if (s == "plain_sum") return Aggregation::plain_sum;
  throw std::invalid_argument("unknown aggregation '" + s + "' (expected attention_mean or plain_sum)");
}

struct ModelConfig {
  std::size_t d_u = 16;
  std::size_t d_head = 16;
  std::size_t gnn_out = 16;
  std::size_t gnn_layers = 2;
  std::size_t walk_length = 3;
  std::size_t walks_per_node = 10;
  double grl_lambda = 1.0;
  /// Linear ramp of the reversal coefficient over this many epochs; 0 keeps it constant.
  std::size_t grl_warmup_epochs = 0;
  double gamma1 = 1.0;
  double gamma2 = 1.0;
  double pe_base = 10000.0;
  std::size_t source_classes = 2;
  std::size_t target_classes = 2;
  Aggregation aggregation = Aggregation::attention_mean;

  void check() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("ModelConfig: " + m); };
    if (d_u < 1 || d_head < 1 || gnn_out < 1) fail("d_u, d_head and gnn_out must be >= 1");
    if (gnn_layers < 1) fail("gnn_layers must be >= 1");
    if (walk_length < 1) fail("walk_length must be >= 1");
    if (walks_per_node < 1) fail("walks_per_node must be >= 1");
    if (!(grl_lambda >= 0.0)) fail("grl_lambda must be >= 0");
    if (!(gamma1 >= 0.0) || !(gamma2 >= 0.0)) fail("gamma1 and gamma2 must be >= 0");
    if (!(pe_base > 0.0)) fail("pe_base must be > 0");
    if (source_classes < 1 || target_classes < 1) fail("class counts must be >= 1");
  }

  bool operator==(const ModelConfig&) const = default;
};

/// Which parts of the temporal branch run.
enum class TemporalVariant { full, no_m1 };

struct ModelState {
  ModelConfig config;
  std::size_t source_features = 0;
  std::size_t target_features = 0;
  std::uint64_t walk_seed = 0;
  std::map<std::string, nn::Tensor> params;

  const nn::Tensor& at(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end()) throw std::out_of_range("model has no parameter '" + name + "'");
    return it->second;
  }

  /// Parameters whose names start with any of the prefixes, in name order.
  std::vector<nn::Tensor> select(const std::vector<std::string>& prefixes) const {
    std::vector<nn::Tensor> out;
    for (const auto& [name, t] : params)
      for (const auto& p : prefixes)
        if (name.rfind(p, 0) == 0) {
          out.push_back(t);
          break;
        }
    return out;
  }

  std::vector<nn::Tensor> all() const { return select({""}); }

  nn::NamedMatrices values() const {
    nn::NamedMatrices out;
    for (const auto& [name, t] : params) out.emplace(name, t.value());
    return out;
  }

  /// Deep copy: fresh parameter leaves holding the same values.
  ModelState clone() const {
    ModelState c = *this;
    for (auto& [name, t] : c.params) t = nn::parameter(t.value());
    return c;
  }

  void load(const nn::NamedMatrices& values) {
    for (auto& [name, t] : params) {
      auto it = values.find(name);
      if (it == values.end()) throw std::invalid_argument("checkpoint lacks parameter '" + name + "'");
      if (it->second.rows() != t.rows() || it->second.cols() != t.cols())
        throw std::invalid_argument("checkpoint parameter '" + name + "' has shape " +
                                    std::to_string(it->second.rows()) + "x" + std::to_string(it->second.cols()) +
                                    ", model expects " + t.shape_string());
      t.mutable_value() = it->second;
    }
    for (const auto& [name, m] : values)
      if (!params.count(name)) throw std::invalid_argument("checkpoint has unknown parameter '" + name + "'");
  }
};

inline const std::vector<std::string>& finetune_prefixes() {
  static const std::vector<std::string> p{"mlp_tgt.", "gnn.", "m1.", "head_tgt."};
  return p;
}

/// Deterministic initialization: Glorot weights drawn in a fixed order, zero biases.
inline ModelState init_model(const ModelConfig& cfg, std::size_t source_features, std::size_t target_features,
                             std::uint64_t seed) {
  cfg.check();
  if (source_features < 1 || target_features < 1) throw std::invalid_argument("init_model: feature dims must be >= 1");
  ModelState s;
  s.config = cfg;
  s.source_features = source_features;
  s.target_features = target_features;
  s.walk_seed = stream_key({seed, 0x77616c6bULL});
  std::mt19937_64 rng(seed);
  const auto du = static_cast<Eigen::Index>(cfg.d_u), dh = static_cast<Eigen::Index>(cfg.d_head),
             go = static_cast<Eigen::Index>(cfg.gnn_out);
  auto weight = [&](const std::string& name, Eigen::Index r, Eigen::Index c) {
    s.params.emplace(name, nn::parameter(nn::glorot(r, c, rng)));
  };
  auto bias = [&](const std::string& name, Eigen::Index c) { s.params.emplace(name, nn::parameter(nn::Matrix::Zero(1, c))); };
  for (const auto& [prefix, d_in] : {std::pair{std::string("mlp_src."), source_features},
                                     std::pair{std::string("mlp_tgt."), target_features}}) {
    weight(prefix + "w1", static_cast<Eigen::Index>(d_in), du);
    bias(prefix + "b1", du);
    weight(prefix + "w2", du, du);
    bias(prefix + "b2", du);
  }
  for (std::size_t l = 0; l < cfg.gnn_layers; ++l) weight("gnn.w" + std::to_string(l), l == 0 ? du : go, go);
  weight("m1.proj_w", go, du);
  bias("m1.proj_b", du);
  weight("m1.wq", du, dh);
  weight("m1.wk", du, dh);
  weight("m1.wv", du, dh);
  weight("spatial_dc.w", go, 2);
  bias("spatial_dc.b", 2);
  weight("temporal_dc.w", dh, 2);
  bias("temporal_dc.b", 2);
  weight("head_src.w", dh, static_cast<Eigen::Index>(cfg.source_classes));
  bias("head_src.b", static_cast<Eigen::Index>(cfg.source_classes));
  weight("head_tgt.w", dh, static_cast<Eigen::Index>(cfg.target_classes));
  bias("head_tgt.b", static_cast<Eigen::Index>(cfg.target_classes));
  return s;
}

/// Row-stochastic visit-frequency matrix of one snapshot: entry (v, u) is the
/// share of visits to u among walks_per_node uniform walks of walk_length steps
/// started at v (start included). Walk w of node v draws from its own counter
/// stream keyed by (seed, domain, snapshot, v, w). Isolated nodes stay put.
inline nn::SparseMatrix context_operator(const Snapshot& s, std::size_t walk_length, std::size_t walks_per_node,
                                         std::uint64_t seed, DomainTag domain, std::size_t snapshot_index) {
  const auto adj = s.neighbors();
  const double share = 1.0 / static_cast<double>(walks_per_node * (walk_length + 1));
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(s.node_count * walks_per_node * (walk_length + 1));
  for (std::size_t v = 0; v < s.node_count; ++v)
    for (std::size_t w = 0; w < walks_per_node; ++w) {
      CounterStream rng(stream_key({seed, static_cast<std::uint64_t>(domain), snapshot_index, v, w}));
      std::size_t at = v;
      trips.emplace_back(static_cast<int>(v), static_cast<int>(at), share);
      for (std::size_t step = 0; step < walk_length; ++step) {
        if (!adj[at].empty()) at = adj[at][rng.next_below(adj[at].size())];
        trips.emplace_back(static_cast<int>(v), static_cast<int>(at), share);
      }
    }
  nn::SparseMatrix c(static_cast<Eigen::Index>(s.node_count), static_cast<Eigen::Index>(s.node_count));
  c.setFromTriplets(trips.begin(), trips.end());  // duplicates are summed
  return c;
}

/// Context matrices for each snapshot: mean spatial embedding over all walk visits.
inline std::vector<Eigen::MatrixXd> temporal_context(const DynamicGraph& g,
                                                     const std::vector<Eigen::MatrixXd>& spatial_embeddings,
                                                     const ModelConfig& cfg, std::uint64_t seed) {
  if (spatial_embeddings.size() != g.snapshots.size())
    throw std::invalid_argument("temporal_context: need one embedding matrix per snapshot");
  std::vector<Eigen::MatrixXd> out;
  for (std::size_t i = 0; i < g.snapshots.size(); ++i) {
    if (static_cast<std::size_t>(spatial_embeddings[i].rows()) != g.snapshots[i].node_count)
      throw std::invalid_argument("temporal_context: embedding rows differ from node count at snapshot " +
                                  std::to_string(i));
    out.push_back(context_operator(g.snapshots[i], cfg.walk_length, cfg.walks_per_node, seed, g.domain_tag, i) *
                  spatial_embeddings[i]);
  }
  return out;
}

/// PE(t)[2i] = sin(t / base^(2i/d)), PE(t)[2i+1] = cos(t / base^(2i/d)).
inline Eigen::RowVectorXd positional_encoding(double t, std::size_t d, double base) {
  Eigen::RowVectorXd pe(static_cast<Eigen::Index>(d));
  for (std::size_t k = 0; k < d; ++k) {
    const double freq = std::pow(base, static_cast<double>(2 * (k / 2)) / static_cast<double>(d));
    pe(static_cast<Eigen::Index>(k)) = k % 2 == 0 ? std::sin(t / freq) : std::cos(t / freq);
  }
  return pe;
}

/// project(context) + PE(t) on every row.
inline nn::Tensor temporal_position_encode(const nn::Tensor& context, double t, const nn::Tensor& proj_w,
                                           const nn::Tensor& proj_b, double pe_base) {
  const auto pe = positional_encoding(t, static_cast<std::size_t>(proj_w.cols()), pe_base);
  return nn::add(nn::linear(context, proj_w, proj_b), nn::constant(pe));
}

/// Everything about one domain that does not depend on parameters.
struct DomainInputs {
  DomainTag domain = DomainTag::source;
  std::size_t nodes = 0;
  std::size_t steps = 0;
  nn::Tensor features;                               // [steps*N x d_in]
  std::shared_ptr<const nn::SparseOperator> adjacency;  // block-diagonal normalized adjacency
  std::shared_ptr<const nn::SparseOperator> context;    // block-diagonal visit frequencies
  nn::Tensor position;                               // [steps*N x d_u] positional encodings
  std::vector<std::vector<std::pair<Eigen::Index, int>>> labels;  // per snapshot, node index -> class
};

/// Stacks the first `steps` snapshots of g.
inline DomainInputs prepare_domain(const DynamicGraph& g, std::size_t steps, const ModelConfig& cfg,
                                   std::uint64_t walk_seed) {
  if (steps < 1 || steps > g.snapshots.size())
    throw std::invalid_argument("prepare_domain: need 1.." + std::to_string(g.snapshots.size()) + " snapshots, got " +
                                std::to_string(steps));
  const std::size_t n = require_constant_node_count(g);
  DomainInputs in;
  in.domain = g.domain_tag;
  in.nodes = n;
  in.steps = steps;
  const auto N = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd feats(N * static_cast<Eigen::Index>(steps), static_cast<Eigen::Index>(g.feature_dim));
  Eigen::MatrixXd pos(feats.rows(), static_cast<Eigen::Index>(cfg.d_u));
  std::vector<nn::SparseMatrix> adj, ctx;
  for (std::size_t i = 0; i < steps; ++i) {
    const auto& s = g.snapshots[i];
    if (static_cast<std::size_t>(s.features.cols()) != g.feature_dim)
      throw std::invalid_argument("prepare_domain: feature width differs at snapshot " + std::to_string(i));
    feats.middleRows(static_cast<Eigen::Index>(i) * N, N) = s.features;
    pos.middleRows(static_cast<Eigen::Index>(i) * N, N).rowwise() = positional_encoding(s.timestamp, cfg.d_u, cfg.pe_base);
    adj.push_back(nn::normalized_adjacency(s));
    ctx.push_back(context_operator(s, cfg.walk_length, cfg.walks_per_node, walk_seed, g.domain_tag, i));
    std::vector<std::pair<Eigen::Index, int>> lab;
    for (const auto& [node, c] : s.labels) lab.emplace_back(static_cast<Eigen::Index>(node), c);
    in.labels.push_back(std::move(lab));
  }
  in.features = nn::constant(std::move(feats));
  in.position = nn::constant(std::move(pos));
  in.adjacency = std::make_shared<const nn::SparseOperator>(nn::block_diagonal(adj));
  in.context = std::make_shared<const nn::SparseOperator>(nn::block_diagonal(ctx));
  return in;
}

struct DomainForward {
  nn::Tensor spatial;         // [steps*N x gnn_out]
  nn::Tensor temporal_rows;   // [steps*N x d_head], one row per node per snapshot
  nn::Tensor representation;  // [N x d_head]
  nn::Tensor logits;          // [N x classes]
};

/// Spatial embeddings of all stacked snapshots.
inline nn::Tensor spatial_forward(const DomainInputs& in, const ModelState& st) {
  const std::string mlp = in.domain == DomainTag::source ? "mlp_src." : "mlp_tgt.";
  nn::Tensor h = nn::linear(nn::relu(nn::linear(in.features, st.at(mlp + "w1"), st.at(mlp + "b1"))),
                            st.at(mlp + "w2"), st.at(mlp + "b2"));
  for (std::size_t l = 0; l < st.config.gnn_layers; ++l) h = nn::graph_conv(h, in.adjacency, st.at("gnn.w" + std::to_string(l)));
  return h;
}

/// Temporal rows and their aggregate from stacked spatial embeddings.
inline std::pair<nn::Tensor, nn::Tensor> temporal_forward(const DomainInputs& in, const nn::Tensor& spatial,
                                                          const ModelState& st, TemporalVariant variant) {
  const auto steps = static_cast<Eigen::Index>(in.steps);
  if (variant == TemporalVariant::no_m1) {
    const nn::Tensor rows = nn::matmul(nn::linear(spatial, st.at("m1.proj_w"), st.at("m1.proj_b")), st.at("m1.wv"));
    return {rows, nn::group_mean(rows, steps)};
  }
  const nn::Tensor ctx = nn::spmm(in.context, spatial);
  const nn::Tensor h = nn::add(nn::linear(ctx, st.at("m1.proj_w"), st.at("m1.proj_b")), in.position);
  if (st.config.aggregation == Aggregation::plain_sum) {
    const nn::Tensor rows = nn::matmul(h, st.at("m1.wv"));
    return {rows, nn::group_sum(rows, steps)};
  }
  const nn::Tensor rows = nn::grouped_attention(nn::matmul(h, st.at("m1.wq")), nn::matmul(h, st.at("m1.wk")),
                                                nn::matmul(h, st.at("m1.wv")), steps);
  return {rows, nn::group_mean(rows, steps)};
}

inline DomainForward domain_forward(const DomainInputs& in, const ModelState& st,
                                    TemporalVariant variant = TemporalVariant::full) {
  if (in.features.cols() !=
      static_cast<Eigen::Index>(in.domain == DomainTag::source ? st.source_features : st.target_features))
    throw std::invalid_argument("model_forward: " + to_string(in.domain) + " features have width " +
                                std::to_string(in.features.cols()) + ", model expects " +
                                std::to_string(in.domain == DomainTag::source ? st.source_features
                                                                               : st.target_features));
  DomainForward out;
  out.spatial = spatial_forward(in, st);
  std::tie(out.temporal_rows, out.representation) = temporal_forward(in, out.spatial, st, variant);
  const std::string head = in.domain == DomainTag::source ? "head_src." : "head_tgt.";
  out.logits = nn::linear(out.representation, st.at(head + "w"), st.at(head + "b"));
  return out;
}

/// Parameter-free temporal encoding of one domain for given spatial embeddings.
inline Eigen::MatrixXd temporal_encoding(const DynamicGraph& g, const std::vector<Eigen::MatrixXd>& spatial_embeddings,
                                         const ModelState& st, std::uint64_t seed) {
  if (spatial_embeddings.size() != g.snapshots.size())
    throw std::invalid_argument("temporal_encoding: need one embedding matrix per snapshot");
  const DomainInputs in = prepare_domain(g, g.snapshots.size(), st.config, seed);
  Eigen::MatrixXd stacked(static_cast<Eigen::Index>(in.nodes * in.steps), spatial_embeddings.at(0).cols());
  for (std::size_t i = 0; i < in.steps; ++i) {
    if (static_cast<std::size_t>(spatial_embeddings[i].rows()) != in.nodes)
      throw std::invalid_argument("temporal_encoding: node-count mismatch at snapshot " + std::to_string(i));
    stacked.middleRows(static_cast<Eigen::Index>(i * in.nodes), static_cast<Eigen::Index>(in.nodes)) =
        spatial_embeddings[i];
  }
  return temporal_forward(in, nn::constant(stacked), st, TemporalVariant::full).second.value();
}

struct PairInputs {
  DomainInputs source;
  DomainInputs target;
  std::size_t horizon = 0;
  std::vector<std::size_t> few_shot_train;
};

inline PairInputs prepare_pair(const DomainPair& pair, const ModelState& st) {
  const auto report = validate_domain_pair(pair);
  if (!report.ok()) throw std::invalid_argument("invalid domain pair: " + report.summary());
  PairInputs in;
  in.horizon = pair.horizon();
  in.source = prepare_domain(pair.source, pair.source.snapshots.size(), st.config, st.walk_seed);
  in.target = prepare_domain(pair.target, pair.target.snapshots.size(), st.config, st.walk_seed);
  if (in.source.nodes != in.target.nodes)
    throw std::invalid_argument("source and target node counts differ (" + std::to_string(in.source.nodes) + " vs " +
                                std::to_string(in.target.nodes) + ")");
  in.few_shot_train = pair.few_shot_train;
  return in;
}

struct ForwardOutputs {
  DomainForward source;
  DomainForward target;
  /// Domain-classifier logits over snapshots 1..T of both domains: source rows
  /// first (label 0), then target rows (label 1), each step-major.
  nn::Tensor spatial_domain_logits;
  nn::Tensor temporal_domain_logits;
  std::vector<std::pair<Eigen::Index, int>> domain_labels;
};

/// Full two-domain forward pass. The reversal coefficient is passed in so a
/// warm-up schedule can vary it per epoch.
inline ForwardOutputs model_forward(const PairInputs& in, const ModelState& st, double grl_lambda,
                                    TemporalVariant variant = TemporalVariant::full) {
  ForwardOutputs out;
  out.source = domain_forward(in.source, st, variant);
  out.target = domain_forward(in.target, st, variant);
  const auto rows = static_cast<Eigen::Index>(in.horizon * in.source.nodes);
  auto classify = [&](const nn::Tensor& src, const nn::Tensor& tgt, const std::string& head) {
    const nn::Tensor both = nn::concat_rows({nn::slice_rows(src, 0, rows), nn::slice_rows(tgt, 0, rows)});
    return nn::linear(nn::grl(both, grl_lambda), st.at(head + "w"), st.at(head + "b"));
  };
  out.spatial_domain_logits = classify(out.source.spatial, out.target.spatial, "spatial_dc.");
  out.temporal_domain_logits = classify(out.source.temporal_rows, out.target.temporal_rows, "temporal_dc.");
  out.domain_labels.reserve(static_cast<std::size_t>(2 * rows));
  for (Eigen::Index r = 0; r < 2 * rows; ++r) out.domain_labels.emplace_back(r, r < rows ? 0 : 1);
  return out;
}

inline ForwardOutputs model_forward(const DomainPair& pair, const ModelState& st) {
  return model_forward(prepare_pair(pair, st), st, st.config.grl_lambda);
}

}  // namespace evolunet
