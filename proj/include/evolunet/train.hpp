#pragma once

// Two-phase optimization (joint pretraining on both domains, then fine-tuning
// on the latest target snapshot), evaluation, ablations and empirical
// Lipschitz constants.

#include "evolunet/model.hpp"
#include "evolunet/nn/optim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace evolunet {

struct Ablation {
  bool no_pretrain = false;
  bool no_m1 = false;
  bool no_unif_spatial = false;
  bool no_unif_temporal = false;
  bool plain_sum_eq3_baseline = false;

  bool operator==(const Ablation&) const = default;
};

inline const std::vector<std::string>& ablation_names() {
  static const std::vector<std::string> names{"no_pretrain", "no_m1", "no_unif_spatial", "no_unif_temporal",
                                              "plain_sum_eq3_baseline"};
  return names;
}

inline bool& ablation_flag(Ablation& a, const std::string& name) {
  if (name == "no_pretrain") return a.no_pretrain;
  if (name == "no_m1") return a.no_m1;
  if (name == "no_unif_spatial") return a.no_unif_spatial;
  if (name == "no_unif_temporal") return a.no_unif_temporal;
  if (name == "plain_sum_eq3_baseline") return a.plain_sum_eq3_baseline;
  throw std::invalid_argument("unknown ablation '" + name + "'");
}

inline Ablation parse_ablation(const std::string& name) {
  Ablation a;
  if (name != "full") ablation_flag(a, name) = true;
  return a;
}

inline std::string to_string(const Ablation& a) {
  std::string out;
  Ablation copy = a;
  for (const auto& n : ablation_names())
    if (ablation_flag(copy, n)) out += (out.empty() ? "" : "+") + n;
  return out.empty() ? "full" : out;
}

struct TrainConfig {
  std::size_t pretrain_epochs = 2000;
  std::size_t finetune_epochs = 600;
  double lr = 3e-3;
  std::uint64_t seed = 0;
  ModelConfig model;
  Ablation ablation;
  /// Stops when the loss has not improved by a relative 1e-5 for `patience` epochs.
  bool early_stop = false;
  std::size_t patience = 100;
  double min_rel_improvement = 1e-5;

  void check() const {
    if (!(lr > 0.0)) throw std::invalid_argument("TrainConfig: lr must be > 0");
    model.check();
  }
};

enum class Phase { pretrain, finetune };

inline std::string to_string(Phase p) { return p == Phase::pretrain ? "pretrain" : "finetune"; }

struct EpochLoss {
  std::size_t epoch = 0;
  double grl_spatial = 0.0;
  double grl_temporal = 0.0;
  double source = 0.0;
  double target = 0.0;
  double total = 0.0;
};

struct TrainReport {
  Phase phase = Phase::pretrain;
  std::vector<EpochLoss> epochs;  // losses before the update of each epoch
  double final_auc = std::numeric_limits<double>::quiet_NaN();
  double wall_seconds = 0.0;
  std::uint64_t seed = 0;
  TrainConfig config;

  std::string epochs_csv() const {
    std::ostringstream out;
    out << "phase,epoch,grl_spatial,grl_temporal,source,target,total\n";
    for (const auto& e : epochs)
      out << to_string(phase) << ',' << e.epoch << ',' << format_real(e.grl_spatial) << ','
          << format_real(e.grl_temporal) << ',' << format_real(e.source) << ',' << format_real(e.target) << ','
          << format_real(e.total) << '\n';
    return out.str();
  }
};

namespace detail {

inline std::vector<std::pair<Eigen::Index, int>> restrict_labels(const std::vector<std::pair<Eigen::Index, int>>& labels,
                                                                 const std::vector<std::size_t>& keep) {
  std::set<Eigen::Index> allowed;
  for (auto v : keep) allowed.insert(static_cast<Eigen::Index>(v));
  std::vector<std::pair<Eigen::Index, int>> out;
  for (const auto& l : labels)
    if (allowed.count(l.first)) out.push_back(l);
  return out;
}

inline TemporalVariant variant_of(const Ablation& a) { return a.no_m1 ? TemporalVariant::no_m1 : TemporalVariant::full; }

inline ModelState effective_state(ModelState st, const Ablation& a) {
  if (a.plain_sum_eq3_baseline) st.config.aggregation = Aggregation::plain_sum;
  return st;
}

class Stopper {
 public:
  Stopper(const TrainConfig& cfg) : cfg_(cfg) {}
  bool should_stop(double loss) {
    if (!cfg_.early_stop) return false;
    if (loss < best_ - cfg_.min_rel_improvement * std::abs(best_)) {
      best_ = loss;
      stale_ = 0;
      return false;
    }
    return ++stale_ >= cfg_.patience;
  }

 private:
  const TrainConfig& cfg_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t stale_ = 0;
};

inline void require_finite(double loss, std::size_t epoch, Phase phase) {
  if (!std::isfinite(loss))
    throw std::runtime_error(to_string(phase) + " diverged: non-finite loss at epoch " + std::to_string(epoch));
}

}  // namespace detail

struct PretrainLoss {
  nn::Tensor grl_spatial, grl_temporal, source, target, total;
};

/// L_total = L_GRL + gamma1 * (L_source + gamma2 * L_target), where L_GRL sums
/// the per-snapshot domain cross-entropies of snapshots 1..T, L_source sums the
/// source head's cross-entropy against every source snapshot's labels, and
/// L_target sums the target head's cross-entropy against the few-shot labels
/// of target snapshots 1..T+1.
inline PretrainLoss pretrain_loss(const ForwardOutputs& f, const PairInputs& in, const ModelConfig& cfg,
                                  const Ablation& ablation) {
  PretrainLoss L;
  const double T = static_cast<double>(in.horizon);
  L.grl_spatial = ablation.no_unif_spatial ? nn::scalar(0.0)
                                           : nn::scale(nn::cross_entropy(f.spatial_domain_logits, f.domain_labels), T);
  L.grl_temporal = ablation.no_unif_temporal
                       ? nn::scalar(0.0)
                       : nn::scale(nn::cross_entropy(f.temporal_domain_logits, f.domain_labels), T);
  L.source = nn::scalar(0.0);
  for (const auto& labels : in.source.labels)
    if (!labels.empty()) L.source = nn::add(L.source, nn::cross_entropy(f.source.logits, labels));
  L.target = nn::scalar(0.0);
  for (const auto& labels : in.target.labels) {
    const auto few = detail::restrict_labels(labels, in.few_shot_train);
    if (!few.empty()) L.target = nn::add(L.target, nn::cross_entropy(f.target.logits, few));
  }
  L.total = nn::add(nn::add(L.grl_spatial, L.grl_temporal),
                    nn::scale(nn::add(L.source, nn::scale(L.target, cfg.gamma2)), cfg.gamma1));
  return L;
}

inline double grl_coefficient(const ModelConfig& cfg, std::size_t epoch) {
  if (cfg.grl_warmup_epochs == 0) return cfg.grl_lambda;
  return cfg.grl_lambda * std::min(1.0, static_cast<double>(epoch) / static_cast<double>(cfg.grl_warmup_epochs));
}

struct TrainResult {
  ModelState state;
  TrainReport report;
};

/// Joint training on both domains from a fresh initialization.
inline TrainResult pretrain(const DomainPair& pair, const TrainConfig& cfg) {
  cfg.check();
  const auto start = std::chrono::steady_clock::now();
  ModelState st = init_model(cfg.model, pair.source.feature_dim, pair.target.feature_dim, cfg.seed);
  const ModelState eff = detail::effective_state(st, cfg.ablation);
  const PairInputs in = prepare_pair(pair, eff);
  nn::Adam opt(st.all(), {cfg.lr});
  TrainReport rep;
  rep.phase = Phase::pretrain;
  rep.seed = cfg.seed;
  rep.config = cfg;
  detail::Stopper stopper(cfg);
  for (std::size_t epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
    const ForwardOutputs f =
        model_forward(in, eff, grl_coefficient(cfg.model, epoch), detail::variant_of(cfg.ablation));
    const PretrainLoss L = pretrain_loss(f, in, cfg.model, cfg.ablation);
    detail::require_finite(L.total.item(), epoch, Phase::pretrain);
    rep.epochs.push_back({epoch, L.grl_spatial.item(), L.grl_temporal.item(), L.source.item(), L.target.item(),
                          L.total.item()});
    opt.zero_grad();
    nn::backward(L.total);
    opt.step();
    if (stopper.should_stop(L.total.item())) break;
  }
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {std::move(st), std::move(rep)};
}

/// Cross-entropy on the few-shot labels of the last target snapshot, updating
/// only the target MLP, the shared graph-conv stack, the temporal module and
/// the target head. Domain branches are not evaluated. Works on a copy.
inline TrainResult finetune(const ModelState& initial, const DomainPair& pair, const TrainConfig& cfg) {
  cfg.check();
  if (pair.few_shot_train.empty()) throw std::invalid_argument("finetune: empty few-shot training set");
  const auto start = std::chrono::steady_clock::now();
  ModelState st = initial.clone();
  const ModelState eff = detail::effective_state(st, cfg.ablation);
  const DomainInputs tgt = prepare_domain(pair.target, pair.target.snapshots.size(), eff.config, eff.walk_seed);
  const auto labels = detail::restrict_labels(tgt.labels.back(), pair.few_shot_train);
  if (labels.empty()) throw std::invalid_argument("finetune: few-shot nodes carry no labels at the last snapshot");
  nn::Adam opt(st.select(finetune_prefixes()), {cfg.lr});
  TrainReport rep;
  rep.phase = Phase::finetune;
  rep.seed = cfg.seed;
  rep.config = cfg;
  detail::Stopper stopper(cfg);
  for (std::size_t epoch = 0; epoch < cfg.finetune_epochs; ++epoch) {
    const DomainForward f = domain_forward(tgt, eff, detail::variant_of(cfg.ablation));
    const nn::Tensor loss = nn::cross_entropy(f.logits, labels);
    detail::require_finite(loss.item(), epoch, Phase::finetune);
    rep.epochs.push_back({epoch, 0.0, 0.0, 0.0, loss.item(), loss.item()});
    for (auto& p : st.all()) p.zero_grad();
    nn::backward(loss);
    opt.step();
    if (stopper.should_stop(loss.item())) break;
  }
  for (auto& p : st.all()) p.zero_grad();
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {std::move(st), std::move(rep)};
}

/// Softmax scores of the target head using target snapshots 0..snapshot_index.
inline Eigen::MatrixXd predict(const ModelState& st, const DynamicGraph& target, std::size_t snapshot_index,
                               const Ablation& ablation = {}) {
  if (snapshot_index >= target.snapshots.size())
    throw std::invalid_argument("predict: snapshot " + std::to_string(snapshot_index) + " does not exist");
  const ModelState eff = detail::effective_state(st, ablation);
  const DomainInputs in = prepare_domain(target, snapshot_index + 1, eff.config, eff.walk_seed);
  return nn::softmax_rows_value(domain_forward(in, eff, detail::variant_of(ablation)).logits.value());
}

/// Macro one-vs-rest ROC AUC over the given nodes (Mann-Whitney, ties count
/// one half). Classes with an empty positive or negative side are skipped.
inline double auc(const Eigen::MatrixXd& scores, const std::vector<std::pair<std::size_t, int>>& labels) {
  double total = 0.0;
  std::size_t used = 0;
  for (Eigen::Index c = 0; c < scores.cols(); ++c) {
    std::vector<std::pair<double, bool>> s;
    for (const auto& [node, y] : labels) {
      if (node >= static_cast<std::size_t>(scores.rows()))
        throw std::invalid_argument("auc: node " + std::to_string(node) + " out of range");
      s.emplace_back(scores(static_cast<Eigen::Index>(node), c), y == c);
    }
    const auto pos = static_cast<double>(std::count_if(s.begin(), s.end(), [](auto& x) { return x.second; }));
    const double neg = static_cast<double>(s.size()) - pos;
    if (pos == 0.0 || neg == 0.0) continue;
    std::sort(s.begin(), s.end(), [](auto& a, auto& b) { return a.first < b.first; });
    // Sum of midranks of the positives.
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < s.size();) {
      std::size_t j = i;
      while (j < s.size() && s[j].first == s[i].first) ++j;
      const double midrank = 0.5 * static_cast<double>(i + 1 + j);
      for (std::size_t k = i; k < j; ++k)
        if (s[k].second) rank_sum += midrank;
      i = j;
    }
    total += (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
    ++used;
  }
  if (used == 0) throw std::invalid_argument("auc: need at least two classes present among the evaluated nodes");
  return total / static_cast<double>(used);
}

/// AUC of the target head on the held-out nodes of the last target snapshot.
inline double evaluate(const ModelState& st, const DomainPair& pair, const Ablation& ablation = {}) {
  const std::size_t last = pair.target.snapshots.size() - 1;
  const Eigen::MatrixXd scores = predict(st, pair.target, last, ablation);
  std::vector<std::pair<std::size_t, int>> labels;
  const auto& lab = pair.target.snapshots[last].labels;
  for (auto v : pair.held_out_eval) {
    auto it = lab.find(v);
    if (it != lab.end()) labels.emplace_back(v, it->second);
  }
  return auc(scores, labels);
}

struct RunResult {
  ModelState state;
  TrainReport pretrain_report;
  TrainReport finetune_report;
  double auc = 0.0;
};

/// Pretrain (unless ablated) then fine-tune, then evaluate.
inline RunResult train_and_evaluate(const DomainPair& pair, const TrainConfig& cfg) {
  RunResult r;
  if (cfg.ablation.no_pretrain) {
    r.state = init_model(cfg.model, pair.source.feature_dim, pair.target.feature_dim, cfg.seed);
    r.pretrain_report.seed = cfg.seed;
    r.pretrain_report.config = cfg;
  } else {
    auto pre = pretrain(pair, cfg);
    r.state = std::move(pre.state);
    r.pretrain_report = std::move(pre.report);
  }
  auto fine = finetune(r.state, pair, cfg);
  r.state = std::move(fine.state);
  r.finetune_report = std::move(fine.report);
  r.auc = evaluate(r.state, pair, cfg.ablation);
  r.finetune_report.final_auc = r.auc;
  r.pretrain_report.final_auc = r.auc;
  return r;
}

struct AblationRow {
  std::string config;
  std::uint64_t seed = 0;
  double auc = 0.0;
};

struct AblationSummary {
  std::string config;
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation
  std::size_t runs = 0;
};

struct AblationTable {
  std::vector<AblationRow> rows;
  std::vector<AblationSummary> summary;

  std::vector<double> aucs(const std::string& config) const {
    std::vector<double> out;
    for (const auto& r : rows)
      if (r.config == config) out.push_back(r.auc);
    return out;
  }

  std::string csv() const {
    std::ostringstream out;
    out << "config,seed,auc\n";
    for (const auto& r : rows) out << r.config << ',' << r.seed << ',' << format_real(r.auc) << '\n';
    return out.str();
  }
};

/// Runs the full model plus one row group per switch set, for every seed.
/// `make_pair(seed)` supplies the dataset of each seed, so callers can either
/// fix one dataset or regenerate per seed. Rows come out in (switch, seed) order.
inline AblationTable ablation_run(const std::function<DomainPair(std::uint64_t)>& make_pair,
                                  const TrainConfig& base, const std::vector<Ablation>& switches,
                                  const std::vector<std::uint64_t>& seeds) {
  std::vector<Ablation> configs{Ablation{}};
  for (const auto& s : switches)
    if (!(s == Ablation{})) configs.push_back(s);
  std::vector<DomainPair> pairs;
  for (auto seed : seeds) pairs.push_back(make_pair(seed));
  AblationTable table;
  for (const auto& a : configs) {
    AblationSummary sum;
    sum.config = to_string(a);
    std::vector<double> values;
    for (std::size_t k = 0; k < seeds.size(); ++k) {
      TrainConfig cfg = base;
      cfg.seed = seeds[k];
      cfg.ablation = a;
      const double v = train_and_evaluate(pairs[k], cfg).auc;
      table.rows.push_back({sum.config, seeds[k], v});
      values.push_back(v);
    }
    sum.runs = values.size();
    if (!values.empty()) {
      sum.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
      double ss = 0.0;
      for (double v : values) ss += (v - sum.mean) * (v - sum.mean);
      sum.sd = values.size() > 1 ? std::sqrt(ss / static_cast<double>(values.size() - 1)) : 0.0;
    }
    table.summary.push_back(sum);
  }
  return table;
}

inline AblationTable ablation_run(const DomainPair& pair, const TrainConfig& base, const std::vector<Ablation>& switches,
                                  const std::vector<std::uint64_t>& seeds) {
  return ablation_run([&pair](std::uint64_t) { return pair; }, base, switches, seeds);
}

struct LipschitzEstimate {
  double R_emp = 0.0;    // scorer: max |h(x) - h(x')| / |x - x'|
  double rho_emp = 0.0;  // cross-entropy in the logits, same label: max |l(z) - l(z')| / |z - z'|
  std::size_t pairs = 0;
  bool empirical = true;  // lower bounds from sampled pairs, not certified constants
};

/// Largest difference quotient of f over `trials` sampled pairs of distinct
/// rows of `points`. The pairs depend only on (seed, trials, row count).
inline double max_difference_quotient(const std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>& f,
                                      const Eigen::MatrixXd& points, std::size_t trials, std::uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("estimate_lipschitz: trials must be >= 1");
  if (points.rows() < 2) throw std::invalid_argument("estimate_lipschitz: need at least two points");
  const Eigen::MatrixXd values = f(points);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Eigen::Index> pick(0, points.rows() - 1);
  double best = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    const Eigen::Index i = pick(rng);
    Eigen::Index j = pick(rng);
    if (j == i) j = (i + 1) % points.rows();
    const double dx = (points.row(i) - points.row(j)).norm();
    if (dx == 0.0) continue;
    best = std::max(best, (values.row(i) - values.row(j)).norm() / dx);
  }
  return best;
}

/// Empirical constants of the target head on representation rows.
inline LipschitzEstimate estimate_lipschitz(const ModelState& st, const Eigen::MatrixXd& representations,
                                            std::size_t trials, std::uint64_t seed) {
  const Eigen::MatrixXd& w = st.at("head_tgt.w").value();
  const Eigen::RowVectorXd b = st.at("head_tgt.b").value().row(0);
  auto head = [&](const Eigen::MatrixXd& x) -> Eigen::MatrixXd { return (x * w).rowwise() + b; };
  LipschitzEstimate est;
  est.pairs = trials;
  est.R_emp = max_difference_quotient(head, representations, trials, seed);
  const Eigen::MatrixXd logits = head(representations);
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    auto loss = [c](const Eigen::MatrixXd& z) -> Eigen::MatrixXd {
      Eigen::MatrixXd out(z.rows(), 1);
      for (Eigen::Index r = 0; r < z.rows(); ++r) {
        const double mx = z.row(r).maxCoeff();
        out(r, 0) = mx + std::log((z.row(r).array() - mx).exp().sum()) - z(r, c);
      }
      return out;
    };
    est.rho_emp = std::max(est.rho_emp, max_difference_quotient(loss, logits, trials, seed));
  }
  return est;
}

}  // namespace evolunet
