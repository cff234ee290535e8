// evolunet: command-line front end over the header library.

#include "evolunet/evolunet.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace evolunet;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  std::string config;
  std::string out;
  std::string format = "text";
};

RunConfig load_config(const Globals& g) { return g.config.empty() ? RunConfig{} : load_run_config(g.config); }

bool csv(const Globals& g) { return g.format == "csv"; }

/// Writes to --out/<name> when --out is set, otherwise to stdout.
void emit(const Globals& g, const std::string& name, const std::string& text) {
  if (g.out.empty()) {
    std::cout << text;
    return;
  }
  fs::create_directories(g.out);
  std::ofstream f(fs::path(g.out) / name);
  if (!f) throw std::runtime_error("cannot write '" + (fs::path(g.out) / name).string() + "'");
  f << text;
}

std::string stats_report(const DomainPair& pair, const Globals& g) {
  std::ostringstream out;
  if (csv(g)) out << "seed,domain,snapshot,timestamp,node_count,edge_count,labeled_count,label_coverage,density\n";
  else out << "seed = " << g.seed << '\n';
  for (const auto* dom : {&pair.source, &pair.target}) {
    const auto stats = snapshot_stats(*dom);
    for (std::size_t i = 0; i < stats.size(); ++i) {
      const auto& s = stats[i];
      const double t = dom->snapshots[i].timestamp;
      if (csv(g))
        out << g.seed << ',' << to_string(dom->domain_tag) << ',' << i << ',' << format_real(t) << ',' << s.node_count
            << ',' << s.edge_count << ',' << s.labeled_count << ',' << format_real(s.label_coverage) << ','
            << format_real(s.density) << '\n';
      else
        out << to_string(dom->domain_tag) << " t" << i << ": timestamp " << t << ", nodes " << s.node_count
            << ", edges " << s.edge_count << ", labeled " << s.labeled_count << ", density " << s.density << '\n';
    }
  }
  return out.str();
}

std::string discrepancy_report(const DynWReport& r, Measure measure, const Globals& g, bool header) {
  std::ostringstream out;
  if (csv(g)) {
    if (header) out << "seed,measure,term,index,value,is_argmax\n";
    for (std::size_t k = 0; k < r.per_term.size(); ++k) {
      const auto& t = r.per_term[k];
      const char* kind = t.kind == TermKind::src_consecutive   ? "src_consecutive"
                         : t.kind == TermKind::src_tgt_initial ? "src_tgt_initial"
                                                               : "tgt_consecutive";
      out << g.seed << ',' << to_string(measure) << ',' << kind << ',' << t.index << ',' << format_real(t.value) << ','
          << (k == r.argmax ? 1 : 0) << '\n';
    }
    out << g.seed << ',' << to_string(measure) << ",dynamic_total,0," << format_real(r.value) << ",0\n";
    return out.str();
  }
  out << "measure = " << to_string(measure) << '\n';
  out << "seed = " << g.seed << '\n';
  out << "dynamic_distance = " << format_real(r.value) << '\n';
  out << "argmax_term = " << r.argmax_term().name() << '\n';
  out << "rho = " << format_real(r.rho) << "\nR = " << format_real(r.R) << "\ndepth = " << r.depth << '\n';
  for (const auto& t : r.per_term) out << "term " << t.name() << " = " << format_real(t.value) << '\n';
  return out.str();
}

std::string bound_report(const BoundReport& r, const Globals& g) {
  std::ostringstream out;
  if (csv(g)) {
    out << to_string(r.which) << ",min_or_average_error," << format_real(r.term_min_error) << '\n'
        << to_string(r.which) << ",discrepancy," << format_real(r.term_discrepancy) << '\n'
        << to_string(r.which) << ",rademacher," << format_real(r.term_rademacher) << '\n'
        << to_string(r.which) << ",concentration," << format_real(r.term_concentration) << '\n'
        << to_string(r.which) << ",total," << format_real(r.total) << '\n';
    return out.str();
  }
  out << "[" << to_string(r.which) << "]\n";
  out << (r.which == BoundKind::theorem1 ? "min_error_term" : "average_error_term") << " = "
      << format_real(r.term_min_error) << '\n';
  out << "discrepancy_term = " << format_real(r.term_discrepancy) << '\n';
  out << "rademacher_term = " << format_real(r.term_rademacher) << '\n';
  out << "concentration_term = " << format_real(r.term_concentration) << '\n';
  out << "total = " << format_real(r.total) << '\n';
  if (r.constants_echo.constants_empirical) out << "constants = empirical (sampled difference quotients)\n";
  out << "note = " << r.note << '\n';
  return out.str();
}

void save_model(const fs::path& dir, const RunConfig& cfg, const ModelState& st, const Ablation& ablation) {
  fs::create_directories(dir);
  nn::save_checkpoint((dir / "model.ckpt").string(), st.values());
  std::ofstream c(dir / "config");
  RunConfig copy = cfg;
  copy.train.model = st.config;
  copy.train.ablation = ablation;
  c << format_run_config(copy);
  std::ofstream s(dir / "state");
  s << "source_features = " << st.source_features << '\n'
    << "target_features = " << st.target_features << '\n'
    << "walk_seed = " << st.walk_seed << '\n';
}

std::pair<ModelState, Ablation> load_model(const fs::path& dir) {
  const RunConfig cfg = load_run_config((dir / "config").string());
  std::size_t src = 0, tgt = 0;
  std::uint64_t walk = 0;
  for (const auto& e : parse_kv_file((dir / "state").string())) {
    if (e.key == "source_features") src = static_cast<std::size_t>(parse_integer(e.value, e.line));
    else if (e.key == "target_features") tgt = static_cast<std::size_t>(parse_integer(e.value, e.line));
    else if (e.key == "walk_seed") walk = std::stoull(e.value);
    else throw ParseError(e.line, "unknown key '" + e.key + "' in model state");
  }
  ModelState st = init_model(cfg.train.model, src, tgt, 0);
  st.walk_seed = walk;
  st.load(nn::load_checkpoint((dir / "model.ckpt").string()));
  return {std::move(st), cfg.train.ablation};
}

/// The model's class counts follow the dataset.
TrainConfig train_config_for(const RunConfig& cfg, const DomainPair& pair, std::uint64_t seed) {
  TrainConfig t = cfg.train;
  t.seed = seed;
  t.model.source_classes = pair.source.class_count;
  t.model.target_classes = pair.target.class_count;
  return t;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
  std::vector<std::uint64_t> out;
  for (const auto& item : split(s, ',')) {
    const auto dash = item.find('-');
    if (dash != std::string::npos && dash > 0) {
      const auto lo = std::stoull(item.substr(0, dash)), hi = std::stoull(item.substr(dash + 1));
      for (auto x = lo; x <= hi; ++x) out.push_back(x);
    } else {
      out.push_back(std::stoull(item));
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic graph transfer learning: data generation, discrepancies, bounds, training"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Seed for every random choice")->default_val(0);
  app.add_option("--config", g.config, "Run configuration document");
  app.add_option("--out", g.out, "Output directory (stdout when omitted, where applicable)");
  app.add_option("--format", g.format, "Report format")->check(CLI::IsMember({"text", "csv"}))->default_val("text");

  auto* gen = app.add_subcommand("generate", "Sample an evolving-SBM source/target pair into --out");
  gen->fallthrough();

  std::string src_dir, tgt_dir, measure_name = "wasserstein_exact", csv_path;
  std::size_t depth = 3;
  int p = 1;
  double epsilon = 1e-3, bandwidth = 0.0, rho = 1.0, R = 1.0;
  auto* disc = app.add_subcommand("discrepancy", "Dynamic distance between a source and a target domain");
  disc->fallthrough();
  disc->add_option("source_dir", src_dir, "Source domain directory")->required();
  disc->add_option("target_dir", tgt_dir, "Target domain directory")->required();
  auto* measure_opt = disc->add_option("--measure", measure_name, "wasserstein_exact | wasserstein_sinkhorn | mmd");
  auto* depth_opt = disc->add_option("--depth", depth, "WL depth M");
  auto* p_opt = disc->add_option("--p", p, "Order of the Wasserstein distance");
  auto* eps_opt = disc->add_option("--epsilon", epsilon, "Sinkhorn regularization");
  auto* bw_opt = disc->add_option("--bandwidth", bandwidth, "MMD bandwidth (0 = median heuristic)");
  auto* rho_opt = disc->add_option("--rho", rho, "Loss Lipschitz constant");
  auto* r_opt = disc->add_option("--R", R, "Scorer Lipschitz constant");
  disc->add_option("--csv", csv_path, "Also write the per-term table as CSV");

  std::string inputs_path, which = "theorem1";
  auto* bound = app.add_subcommand("bound", "Evaluate the generalization bound from an inputs file");
  bound->fallthrough();
  bound->add_option("inputs", inputs_path, "Bound inputs file")->required();
  bound->add_option("--bound", which, "theorem1 | eq1")->check(CLI::IsMember({"theorem1", "eq1"}));

  std::string dataset_dir, ablation_name = "full";
  auto* train = app.add_subcommand("train", "Pretrain and fine-tune on a dataset; saves the model under --out");
  train->fallthrough();
  train->add_option("dataset", dataset_dir, "Dataset directory (with source/ and target/)")->required();
  train->add_option("--ablation", ablation_name, "full or one ablation switch");

  std::string model_dir;
  auto* eval = app.add_subcommand("evaluate", "AUC of a trained model on the held-out target nodes");
  eval->fallthrough();
  eval->add_option("dataset", dataset_dir, "Dataset directory")->required();
  eval->add_option("--model", model_dir, "Directory written by train")->required();

  std::string switches_arg, seeds_arg = "0";
  auto* ablate = app.add_subcommand("ablate", "Full model plus ablation rows over seeds, as a CSV table");
  ablate->fallthrough();
  ablate->add_option("dataset", dataset_dir, "Dataset directory")->required();
  ablate->add_option("--switches", switches_arg, "Comma-separated ablation switches");
  ablate->add_option("--seeds", seeds_arg, "Comma-separated seeds or ranges like 0-9");

  std::size_t snapshot = 0, k = 3;
  std::string domain = "target";
  auto* eee = app.add_subcommand("eee", "Top singular vectors of a snapshot adjacency matrix as CSV");
  eee->fallthrough();
  eee->add_option("dataset", dataset_dir, "Dataset directory")->required();
  eee->add_option("--snapshot", snapshot, "Snapshot index (0-based)");
  eee->add_option("--k", k, "Number of singular vectors");
  eee->add_option("--domain", domain, "source | target")->check(CLI::IsMember({"source", "target"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      const RunConfig cfg = load_config(g);
      if (g.out.empty()) throw std::invalid_argument("generate needs --out");
      const DomainPair pair = generate_evolving_sbm(cfg.source, cfg.target, g.seed);
      const auto report = validate_domain_pair(pair);
      if (!report.ok()) throw std::runtime_error("generated pair is invalid: " + report.summary());
      write_domain_pair(pair, g.out);
      std::cout << stats_report(pair, g);
    } else if (disc->parsed()) {
      const RunConfig cfg = load_config(g);
      DiscrepancyConfig dc = cfg.discrepancy;
      if (*measure_opt) dc.measure = parse_measure(measure_name);
      if (*depth_opt) dc.depth = depth;
      if (*p_opt) dc.p = p;
      if (*eps_opt) dc.epsilon = epsilon;
      if (*bw_opt) dc.bandwidth = bandwidth;
      if (*rho_opt) dc.rho = rho;
      if (*r_opt) dc.R = R;
      DomainPair pair;
      pair.source = read_dynamic_graph(src_dir).graph;
      pair.target = read_dynamic_graph(tgt_dir).graph;
      const DynWReport r = dynamic_wasserstein(pair, dc.rho, dc.R, dc.depth, dc.options());
      emit(g, "discrepancy." + std::string(csv(g) ? "csv" : "txt"), discrepancy_report(r, dc.measure, g, true));
      if (!csv_path.empty()) {
        Globals as_csv = g;
        as_csv.format = "csv";
        std::ofstream f(csv_path);
        if (!f) throw std::runtime_error("cannot write '" + csv_path + "'");
        f << discrepancy_report(r, dc.measure, as_csv, true);
      }
    } else if (bound->parsed()) {
      const BoundInputs in = load_bound_inputs(inputs_path);
      std::string text = "seed = " + std::to_string(g.seed) + "\n";
      if (csv(g)) text = "bound,term,value\n";
      if (which == "eq1") {
        const BoundReport eq1 = wu_he_bound(in), th = theorem1_bound(in);
        text += bound_report(eq1, g) + bound_report(th, g);
        if (!csv(g))
          text += "side_by_side: eq1_wu_he total = " + format_real(eq1.total) +
                  ", theorem1 total = " + format_real(th.total) + '\n';
      } else {
        text += bound_report(theorem1_bound(in), g);
      }
      emit(g, "bound." + std::string(csv(g) ? "csv" : "txt"), text);
    } else if (train->parsed()) {
      const RunConfig cfg = load_config(g);
      if (g.out.empty()) throw std::invalid_argument("train needs --out for the model directory");
      const DomainPair pair = read_domain_pair(dataset_dir);
      TrainConfig tc = train_config_for(cfg, pair, g.seed);
      tc.ablation = parse_ablation(ablation_name);
      const RunResult r = train_and_evaluate(pair, tc);
      save_model(g.out, cfg, r.state, tc.ablation);
      {
        std::ofstream f(fs::path(g.out) / "epochs.csv");
        f << r.pretrain_report.epochs_csv();
        const std::string fine = r.finetune_report.epochs_csv();
        f << fine.substr(fine.find('\n') + 1);
      }
      std::ostringstream rep;
      rep << "seed = " << g.seed << "\nablation = " << to_string(tc.ablation)
          << "\npretrain_epochs = " << r.pretrain_report.epochs.size()
          << "\nfinetune_epochs = " << r.finetune_report.epochs.size()
          << "\nwall_seconds = " << r.pretrain_report.wall_seconds + r.finetune_report.wall_seconds
          << "\nauc = " << format_real(r.auc) << '\n';
      std::ofstream(fs::path(g.out) / "report.txt") << rep.str() << "\n" << format_run_config(cfg);
      std::cout << rep.str();
    } else if (eval->parsed()) {
      const DomainPair pair = read_domain_pair(dataset_dir);
      const auto [st, ablation] = load_model(model_dir);
      const double value = evaluate(st, pair, ablation);
      if (csv(g)) std::cout << "seed,auc\n" << g.seed << ',' << format_real(value) << '\n';
      else std::cout << "seed = " << g.seed << "\nauc = " << format_real(value) << '\n';
    } else if (ablate->parsed()) {
      const RunConfig cfg = load_config(g);
      const DomainPair pair = read_domain_pair(dataset_dir);
      std::vector<Ablation> switches;
      if (!trim(switches_arg).empty())
        for (const auto& name : split(switches_arg, ',')) switches.push_back(parse_ablation(name));
      const AblationTable t = ablation_run(pair, train_config_for(cfg, pair, g.seed), switches, parse_seed_list(seeds_arg));
      std::string text = t.csv();
      if (!csv(g)) {
        std::ostringstream s;
        for (const auto& row : t.summary)
          s << row.config << ": mean auc " << format_real(row.mean) << " sd " << format_real(row.sd) << " over "
            << row.runs << " seeds\n";
        text += s.str();
      }
      emit(g, "ablation.csv", text);
    } else if (eee->parsed()) {
      const auto loaded = read_dynamic_graph(fs::path(dataset_dir) / domain);
      if (snapshot >= loaded.graph.snapshots.size())
        throw std::invalid_argument("snapshot " + std::to_string(snapshot) + " does not exist");
      const EeeResult r = eee_components(loaded.graph.snapshots[snapshot], k);
      std::ostringstream out;
      out << "node";
      for (std::size_t c = 0; c < k; ++c) out << ",sv" << c + 1;
      out << '\n';
      for (Eigen::Index v = 0; v < r.vectors.rows(); ++v) {
        out << v;
        for (Eigen::Index c = 0; c < r.vectors.cols(); ++c) out << ',' << format_real(r.vectors(v, c));
        out << '\n';
      }
      if (r.rank_deficient) std::cerr << "warning: adjacency is rank deficient; trailing columns are zero\n";
      emit(g, "eee.csv", out.str());
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
