#pragma once

// Run configuration document. Sections are named after the library modules
// and keys after the configuration fields:
//
//   [graph-core.source]   SbmConfig of the source domain
//   [graph-core.target]   SbmConfig of the target domain
//   [evolunet-model]      ModelConfig
//   [train-harness]       TrainConfig (epochs, lr, ablation switches, early stop)
//   [discrepancy]         measure, depth, p, epsilon, bandwidth, max_iterations, pair_cap, rho, R
//   [bound]               which, delta, big_o_constant, rademacher_trials
//
// Unknown sections or keys are errors; missing keys keep their defaults.

#include "evolunet/bound.hpp"
#include "evolunet/discrepancy.hpp"
#include "evolunet/kv.hpp"
#include "evolunet/sbm.hpp"
#include "evolunet/train.hpp"

#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

namespace evolunet {

struct DiscrepancyConfig {
  Measure measure = Measure::wasserstein_exact;
  std::size_t depth = 3;
  int p = 1;
  double epsilon = 1e-3;
  double bandwidth = 0.0;
  std::size_t max_iterations = 100000;
  std::size_t pair_cap = 10000;
  double rho = 1.0;
  double R = 1.0;

  DiscrepancyOptions options() const {
    DiscrepancyOptions o;
    o.measure = measure;
    o.p = p;
    o.epsilon = epsilon;
    o.bandwidth = bandwidth;
    o.max_iterations = max_iterations;
    o.pair_cap = pair_cap;
    return o;
  }
};

inline BoundKind parse_bound_kind(const std::string& s) {
  if (s == "theorem1") return BoundKind::theorem1;
  if (s == "eq1" || s == "eq1_wu_he") return BoundKind::eq1_wu_he;
  throw std::invalid_argument("unknown bound '" + s + "' (expected theorem1 or eq1)");
}

struct BoundConfig {
  BoundKind which = BoundKind::theorem1;
  double delta = 0.05;
  double big_o_constant = 1.0;
  std::size_t rademacher_trials = 1000;
};

struct RunConfig {
  SbmConfig source;
  SbmConfig target;
  TrainConfig train;  // train.model holds the ModelConfig
  DiscrepancyConfig discrepancy;
  BoundConfig bound;
};

namespace detail {

struct Field {
  std::string key;
  std::function<void(const std::string&, std::size_t)> set;
  std::function<std::string()> get;
};

inline std::size_t parse_count(const std::string& v, std::size_t line) {
  const long long x = parse_integer(v, line);
  if (x < 0) throw ParseError(line, "expected a nonnegative integer, got '" + v + "'");
  return static_cast<std::size_t>(x);
}

inline bool parse_bool(const std::string& v, std::size_t line) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ParseError(line, "expected true or false, got '" + v + "'");
}

inline Field count_field(const std::string& key, std::size_t& ref) {
  return {key, [&ref](const std::string& v, std::size_t l) { ref = parse_count(v, l); },
          [&ref] { return std::to_string(ref); }};
}

inline Field real_field(const std::string& key, double& ref) {
  return {key, [&ref](const std::string& v, std::size_t l) { ref = parse_real(v, l); },
          [&ref] { return format_real(ref); }};
}

inline Field bool_field(const std::string& key, bool& ref) {
  return {key, [&ref](const std::string& v, std::size_t l) { ref = parse_bool(v, l); },
          [&ref] { return std::string(ref ? "true" : "false"); }};
}

template <class Parse, class Print, class T>
inline Field custom_field(const std::string& key, T& ref, Parse parse, Print print) {
  return {key,
          [&ref, parse](const std::string& v, std::size_t l) {
            try {
              ref = parse(v);
            } catch (const std::invalid_argument& e) {
              throw ParseError(l, e.what());
            }
          },
          [&ref, print] { return print(ref); }};
}

inline std::vector<Field> sbm_fields(SbmConfig& c) {
  return {count_field("block_count", c.block_count),   count_field("nodes_per_block", c.nodes_per_block),
          real_field("intra_p", c.intra_p),             real_field("inter_p", c.inter_p),
          count_field("feature_dim", c.feature_dim),   real_field("feature_center_shift", c.feature_center_shift),
          real_field("block_mean_scale", c.block_mean_scale), real_field("drift_rate", c.drift_rate),
          count_field("T", c.T),                        real_field("label_noise", c.label_noise),
          count_field("few_shot_k", c.few_shot_k)};
}

inline std::vector<Field> model_fields(ModelConfig& c) {
  return {count_field("d_u", c.d_u),
          count_field("d_head", c.d_head),
          count_field("gnn_out", c.gnn_out),
          count_field("gnn_layers", c.gnn_layers),
          count_field("walk_length", c.walk_length),
          count_field("walks_per_node", c.walks_per_node),
          real_field("grl_lambda", c.grl_lambda),
          count_field("grl_warmup_epochs", c.grl_warmup_epochs),
          real_field("gamma1", c.gamma1),
          real_field("gamma2", c.gamma2),
          real_field("pe_base", c.pe_base),
          count_field("source_classes", c.source_classes),
          count_field("target_classes", c.target_classes),
          custom_field("aggregation", c.aggregation, parse_aggregation,
                       [](Aggregation a) { return to_string(a); })};
}

inline std::vector<Field> train_fields(TrainConfig& c) {
  std::vector<Field> f{count_field("pretrain_epochs", c.pretrain_epochs),
                       count_field("finetune_epochs", c.finetune_epochs),
                       real_field("lr", c.lr),
                       bool_field("early_stop", c.early_stop),
                       count_field("patience", c.patience),
                       real_field("min_rel_improvement", c.min_rel_improvement)};
  for (const auto& name : ablation_names()) f.push_back(bool_field(name, ablation_flag(c.ablation, name)));
  return f;
}

inline std::vector<Field> discrepancy_fields(DiscrepancyConfig& c) {
  return {custom_field("measure", c.measure, parse_measure, [](Measure m) { return to_string(m); }),
          count_field("depth", c.depth),
          {"p",
           [&c](const std::string& v, std::size_t l) {
             const long long p = parse_integer(v, l);
             if (p < 1) throw ParseError(l, "p must be >= 1");
             c.p = static_cast<int>(p);
           },
           [&c] { return std::to_string(c.p); }},
          real_field("epsilon", c.epsilon),
          real_field("bandwidth", c.bandwidth),
          count_field("max_iterations", c.max_iterations),
          count_field("pair_cap", c.pair_cap),
          real_field("rho", c.rho),
          real_field("R", c.R)};
}

inline std::vector<Field> bound_fields(BoundConfig& c) {
  return {custom_field("which", c.which, parse_bound_kind, [](BoundKind k) { return to_string(k); }),
          real_field("delta", c.delta), real_field("big_o_constant", c.big_o_constant),
          count_field("rademacher_trials", c.rademacher_trials)};
}

inline std::vector<std::pair<std::string, std::vector<Field>>> sections(RunConfig& c) {
  return {{"graph-core.source", sbm_fields(c.source)}, {"graph-core.target", sbm_fields(c.target)},
          {"evolunet-model", model_fields(c.train.model)}, {"train-harness", train_fields(c.train)},
          {"discrepancy", discrepancy_fields(c.discrepancy)}, {"bound", bound_fields(c.bound)}};
}

}  // namespace detail

inline RunConfig parse_run_config(std::istream& in) {
  RunConfig cfg;
  auto secs = detail::sections(cfg);
  for (const auto& e : parse_kv(in)) {
    if (e.section.empty()) throw ParseError(e.line, "key '" + e.key + "' appears before any [section]");
    auto sec = std::find_if(secs.begin(), secs.end(), [&](const auto& s) { return s.first == e.section; });
    if (sec == secs.end()) throw ParseError(e.line, "unknown section [" + e.section + "]");
    auto f = std::find_if(sec->second.begin(), sec->second.end(), [&](const auto& x) { return x.key == e.key; });
    if (f == sec->second.end()) throw ParseError(e.line, "unknown key '" + e.key + "' in [" + e.section + "]");
    f->set(e.value, e.line);
  }
  cfg.source.check();
  cfg.target.check();
  cfg.train.check();
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config '" + path + "'");
  try {
    return parse_run_config(in);
  } catch (const ParseError& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

/// Every key with its current value, in a form parse_run_config reads back.
inline std::string format_run_config(const RunConfig& c) {
  RunConfig copy = c;
  std::ostringstream out;
  bool first = true;
  for (const auto& [name, fields] : detail::sections(copy)) {
    out << (first ? "" : "\n") << '[' << name << "]\n";
    first = false;
    for (const auto& f : fields) out << f.key << " = " << f.get() << '\n';
  }
  return out.str();
}

/// Bound input file: flat key = value lines with keys eps_src, eps_tgt
/// (comma-separated lists), dyn_w, rademacher, rho, R, B, delta, n_tilde,
/// big_o_constant, lambda_tilde, m_total.
inline BoundInputs parse_bound_inputs(std::istream& in) {
  BoundInputs b;
  bool have_src = false, have_tgt = false;
  for (const auto& e : parse_kv(in)) {
    if (!e.section.empty()) throw ParseError(e.line, "bound inputs take no sections");
    if (e.key == "eps_src") b.src_errors = parse_real_list(e.value, e.line), have_src = true;
    else if (e.key == "eps_tgt") b.tgt_errors = parse_real_list(e.value, e.line), have_tgt = true;
    else if (e.key == "dyn_w") b.dyn_w = parse_real(e.value, e.line);
    else if (e.key == "rademacher") b.rademacher = parse_real(e.value, e.line);
    else if (e.key == "rho") b.rho = parse_real(e.value, e.line);
    else if (e.key == "R") b.R = parse_real(e.value, e.line);
    else if (e.key == "B") b.B = parse_real(e.value, e.line);
    else if (e.key == "delta") b.delta = parse_real(e.value, e.line);
    else if (e.key == "n_tilde") b.n_tilde = detail::parse_count(e.value, e.line);
    else if (e.key == "big_o_constant") b.big_o_constant = parse_real(e.value, e.line);
    else if (e.key == "lambda_tilde") b.lambda_tilde = parse_real(e.value, e.line);
    else if (e.key == "m_total") b.m_total = detail::parse_count(e.value, e.line);
    else if (e.key == "constants_empirical") b.constants_empirical = detail::parse_bool(e.value, e.line);
    else throw ParseError(e.line, "unknown key '" + e.key + "'");
  }
  if (!have_src || !have_tgt) throw ParseError(0, "bound inputs need both eps_src and eps_tgt");
  return b;
}

inline BoundInputs load_bound_inputs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open bound inputs '" + path + "'");
  try {
    return parse_bound_inputs(in);
  } catch (const ParseError& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

}  // namespace evolunet
