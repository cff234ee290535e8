// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include "evolunet/evolunet.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>

using namespace evolunet;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

Snapshot random_snapshot(std::size_t n, std::size_t dim, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(p);
  Snapshot s;
  s.node_count = n;
  s.features = random_matrix(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim), rng);
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = u + 1; v < n; ++v)
      if (coin(rng)) s.edges.emplace_back(u, v);
  return s;
}

double brute_force_wasserstein(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, int p) {
  std::vector<int> perm(static_cast<std::size_t>(a.rows()));
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      c += std::pow((a.row(i) - b.row(perm[static_cast<std::size_t>(i)])).norm(), p);
    best = std::min(best, c / static_cast<double>(a.rows()));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return std::pow(best, 1.0 / p);
}

double enumerate_rademacher(const Eigen::MatrixXd& preds) {
  const int n = static_cast<int>(preds.cols());
  double total = 0.0;
  for (int mask = 0; mask < (1 << n); ++mask) {
    Eigen::VectorXd sigma(n);
    for (int i = 0; i < n; ++i) sigma(i) = (mask >> i) & 1 ? 1.0 : -1.0;
    total += (preds * sigma).maxCoeff() / n;
  }
  return total / (1 << n);
}

DomainPair toy_pair() {
  SbmConfig c;
  c.nodes_per_block = 5;
  c.feature_dim = 3;
  c.T = 2;
  c.few_shot_k = 2;
  c.intra_p = 0.6;
  c.inter_p = 0.1;
  return generate_evolving_sbm(c, c, 7);
}

Outcome gradients() {
  const auto start = Clock::now();
  std::mt19937_64 rng(1);
  using namespace nn;
  const auto pair = toy_pair();
  const Snapshot& s = pair.source.snapshots[0];
  const auto adj = std::make_shared<const SparseOperator>(normalized_adjacency(s));
  const Tensor x = constant(s.features);
  Tensor w1 = parameter(random_matrix(3, 4, rng)), b1 = parameter(random_matrix(1, 4, rng));
  Tensor wq = parameter(random_matrix(4, 3, rng)), wk = parameter(random_matrix(4, 3, rng));
  Tensor wv = parameter(random_matrix(4, 3, rng)), wg = parameter(random_matrix(4, 4, rng));
  const std::vector<Tensor> params{w1, b1, wq, wk, wv, wg};
  const std::vector<std::pair<std::string, std::function<Tensor()>>> layers{
      {"linear", [&] { return sum(softmax_rows(linear(x, w1, b1))); }},
      {"relu_mlp", [&] { return sum(softmax_rows(matmul(relu(linear(x, w1, b1)), wg))); }},
      {"graph_conv", [&] { return sum(softmax_rows(graph_conv(linear(x, w1, b1), adj, wg))); }},
      {"self_attention", [&] { return sum(softmax_rows(self_attention(linear(x, w1, b1), wq, wk, wv))); }},
      {"grouped_attention", [&] {
         const Tensor h = linear(x, w1, b1);
         return sum(softmax_rows(group_mean(grouped_attention(matmul(h, wq), matmul(h, wk), matmul(h, wv), 2), 2)));
       }},
      {"grl", [&] { return sum(softmax_rows(grl(linear(x, w1, b1), -1.0))); }},
      {"cross_entropy", [&] { return cross_entropy(linear(x, w1, b1), {{0, 1}, {3, 2}, {9, 0}}); }},
  };
  std::ostringstream detail;
  bool ok = true;
  for (const auto& [name, f] : layers) {
    const auto r = grad_check(f, params, 1e-4);
    ok = ok && r.pass;
    if (!r.pass) detail << name << " max_rel_err " << r.max_rel_err << " at " << r.worst << "; ";
  }
  ModelConfig cfg;
  cfg.d_u = 4;
  cfg.d_head = 3;
  cfg.gnn_out = 4;
  cfg.walks_per_node = 3;
  cfg.grl_lambda = 0.7;
  const ModelState st = init_model(cfg, 3, 3, 2);
  const PairInputs in = prepare_pair(pair, st);
  // Coefficient -1 makes the reversal layer an identity in both directions, so
  // backward is the true gradient of the whole objective.
  const auto full = grad_check([&] { return pretrain_loss(model_forward(in, st, -1.0), in, cfg, {}).total; },
                               st.all(), 1e-4);
  ok = ok && full.pass;
  const double elapsed = seconds_since(start);
  detail << layers.size() << " layers + full forward, full max_rel_err " << full.max_rel_err << ", " << elapsed << " s";
  return {ok && elapsed < 30.0, detail.str()};
}

Outcome wasserstein_solvers() {
  std::mt19937_64 rng(2);
  double worst = 0.0;
  int instances = 0;
  for (int trial = 0; trial < 240; ++trial) {
    const Eigen::Index n = 1 + trial % 6;
    const int p = 1 + trial % 2;
    const Eigen::MatrixXd a = random_matrix(n, 2, rng), b = random_matrix(n, 2, rng);
    const double got = wasserstein_exact(EmpiricalDistribution::uniform(a), EmpiricalDistribution::uniform(b), p).value;
    worst = std::max(worst, std::abs(got - brute_force_wasserstein(a, b, p)));
    ++instances;
  }
  double worst_rel = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = EmpiricalDistribution::uniform(random_matrix(20, 2, rng));
    const auto b = EmpiricalDistribution::uniform(random_matrix(20, 2, rng).array() + 0.5);
    const double exact = wasserstein_exact(a, b, 1).value;
    const double approx = wasserstein_sinkhorn(a, b, 1, 1e-3, 100000).value;
    worst_rel = std::max(worst_rel, std::abs(approx - exact) / exact);
  }
  std::ostringstream d;
  d << instances << " exact instances, max |err| " << worst << "; 20 Sinkhorn instances, max rel err " << worst_rel;
  return {worst <= 1e-9 && worst_rel <= 0.05, d.str()};
}

Outcome metric_axioms() {
  std::mt19937_64 rng(3);
  std::size_t violations = 0;
  auto check = [&](double ab, double ba, double bc, double ac, double aa) {
    violations += ab < -1e-9;
    violations += std::abs(ab - ba) > 1e-9;
    violations += ac > ab + bc + 1e-9;
    violations += std::abs(aa) > 1e-9;
  };
  for (int trial = 0; trial < 100; ++trial) {
    const auto a = EmpiricalDistribution::uniform(random_matrix(3 + trial % 4, 2, rng));
    const auto b = EmpiricalDistribution::uniform(random_matrix(4, 2, rng));
    const auto c = EmpiricalDistribution::uniform(random_matrix(2 + trial % 5, 2, rng));
    const int p = 1 + trial % 2;
    check(wasserstein_exact(a, b, p).value, wasserstein_exact(b, a, p).value, wasserstein_exact(b, c, p).value,
          wasserstein_exact(a, c, p).value, wasserstein_exact(a, a, p).value);
  }
  DiscrepancyOptions opt;
  for (int trial = 0; trial < 100; ++trial) {
    const auto a = random_snapshot(5, 2, 0.4, rng), b = random_snapshot(6, 2, 0.4, rng), c = random_snapshot(4, 2, 0.4, rng);
    check(graph_discrepancy(a, b, 2, opt).value, graph_discrepancy(b, a, 2, opt).value,
          graph_discrepancy(b, c, 2, opt).value, graph_discrepancy(a, c, 2, opt).value,
          graph_discrepancy(a, a, 2, opt).value);
  }
  return {violations == 0, "100 triples each for exact W_p and graph discrepancy, " + std::to_string(violations) +
                               " violations"};
}

Outcome dynamic_distance() {
  SbmConfig c;
  c.nodes_per_block = 6;
  c.feature_dim = 2;
  c.T = 3;
  c.few_shot_k = 2;
  std::size_t bad = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto pair = generate_evolving_sbm(c, c, seed);
    const auto r = dynamic_wasserstein(pair, 1.0, 2.0, 2, {});
    double mx = 0.0;
    for (const auto& t : r.per_term) mx = std::max(mx, t.value);
    bad += r.value != 1.0 * std::sqrt(2.0 * 2.0 + 1.0) * mx;
    const auto r3 = dynamic_wasserstein(pair, 3.0, 2.0, 2, {});
    bad += std::abs(r3.value - 3.0 * r.value) > 1e-12 * std::max(1.0, r.value);
    bad += dynamic_wasserstein(pair, 2.0, 2.0, 2, {}).value != 2.0 * r.value;
    DomainPair still;
    still.source.snapshots.assign(3, pair.source.snapshots[0]);
    still.target.snapshots.assign(4, pair.source.snapshots[0]);
    bad += dynamic_wasserstein(still, 1.0, 2.0, 2, {}).value != 0.0;
  }
  return {bad == 0, "10 pairs: formula, linearity in rho and zero for identical snapshots, " + std::to_string(bad) +
                        " mismatches"};
}

Outcome bound_terms() {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::exponential_distribution<double> e(3.0);
  double worst = 0.0;
  std::size_t violations = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    BoundInputs in;
    const std::size_t T = 1 + static_cast<std::size_t>(trial % 10);
    for (std::size_t i = 0; i < T; ++i) in.src_errors.push_back(e(rng)), in.tgt_errors.push_back(e(rng));
    in.dyn_w = u(rng);
    in.rademacher = u(rng);
    in.rho = u(rng);
    in.B = u(rng);
    in.n_tilde = 1 + static_cast<std::size_t>(trial);
    in.m_total = 1 + static_cast<std::size_t>(trial);
    const auto th = theorem1_bound(in);
    worst = std::max(worst, std::abs(th.total - (th.term_min_error + th.term_discrepancy + th.term_rademacher +
                                                 th.term_concentration)));
    violations += th.term_min_error > wu_he_bound(in).term_min_error;
  }
  std::ostringstream d;
  d << "max |total - sum of terms| " << worst << ", min-term > average-term on " << violations << " of 10000";
  return {worst <= 1e-12 && violations == 0, d.str()};
}

Outcome rademacher() {
  std::mt19937_64 rng(6);
  std::size_t misses = 0;
  for (int table = 0; table < 50; ++table) {
    const Eigen::MatrixXd preds = random_matrix(1 + table % 6, 1 + table % 10, rng);
    const double exact = enumerate_rademacher(preds);
    const auto mc = rademacher_monte_carlo(preds, 4000, 1000 + static_cast<std::uint64_t>(table));
    misses += std::abs(mc.value - exact) > 3.0 * mc.standard_error;
  }
  return {misses == 0, "50 tables with n <= 10, " + std::to_string(misses) + " outside 3 SE"};
}

Outcome lemma1() {
  std::size_t holds = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed + 100);
    std::uniform_real_distribution<double> u(0.1, 3.0);
    const Eigen::MatrixXd xa = random_matrix(7, 3, rng);
    const Eigen::MatrixXd xb = random_matrix(6, 3, rng).array() + u(rng);
    const Eigen::VectorXd w = random_matrix(3, 1, rng);
    const Eigen::VectorXd ya = xa * random_matrix(3, 1, rng);
    const Eigen::VectorXd yb = random_matrix(6, 1, rng);
    holds += lemma1_check(w, u(rng), EmpiricalDistribution::uniform(xa), ya, EmpiricalDistribution::uniform(xb), yb).holds;
  }
  return {holds == 100, std::to_string(holds) + "/100 domain pairs"};
}

Outcome reversal() {
  std::mt19937_64 rng(8);
  std::size_t bad = 0;
  for (double lambda : {0.0, 0.5, 1.0, 2.0}) {
    const Eigen::MatrixXd xv = random_matrix(5, 3, rng), wv = random_matrix(3, 4, rng);
    auto x = nn::parameter(xv);
    const auto y = nn::grl(x, lambda);
    bad += !(y.value().array() == xv.array()).all();
    const auto w = nn::constant(wv);
    nn::backward(nn::sum(nn::matmul(y, w)));
    auto plain = nn::parameter(xv);
    nn::backward(nn::sum(nn::matmul(plain, w)));
    const Eigen::MatrixXd expect = -lambda * plain.grad();
    bad += !(x.grad().array() == expect.array()).all();
  }
  return {bad == 0, "lambda in {0, 0.5, 1, 2}, " + std::to_string(bad) + " mismatches"};
}

// Dense reference for the top singular vectors of a symmetric matrix: its
// eigenvectors ordered by |eigenvalue|, ties going to the positive eigenvalue.
// Returns the distance from `v` to the reference vector, or to the whole
// eigenspace when the eigenvalue itself is repeated.
double spectral_reference_gap(const Eigen::MatrixXd& a, int c, const Eigen::VectorXd& v) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
  const Eigen::VectorXd ev = es.eigenvalues();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(ev.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index i, Eigen::Index j) {
    if (std::abs(std::abs(ev(i)) - std::abs(ev(j))) > 1e-9) return std::abs(ev(i)) > std::abs(ev(j));
    return ev(i) > ev(j) + 1e-9;
  });
  const double lambda = ev(order[static_cast<std::size_t>(c)]);
  std::vector<Eigen::Index> same;
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    if (std::abs(ev(i) - lambda) <= 1e-9) same.push_back(i);
  if (same.size() > 1) {
    Eigen::MatrixXd basis(a.rows(), static_cast<Eigen::Index>(same.size()));
    for (std::size_t k = 0; k < same.size(); ++k) basis.col(static_cast<Eigen::Index>(k)) = es.eigenvectors().col(same[k]);
    return (v - basis * (basis.transpose() * v)).cwiseAbs().maxCoeff();
  }
  Eigen::VectorXd ref = es.eigenvectors().col(order[static_cast<std::size_t>(c)]);
  const double top = ref.cwiseAbs().maxCoeff();
  Eigen::Index at = 0;
  while (std::abs(ref(at)) < top - 1e-9) ++at;
  if (ref(at) < 0) ref = -ref;
  return (v - ref).cwiseAbs().maxCoeff();
}

Outcome spectral() {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<std::size_t> size(6, 30);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const Snapshot s = random_snapshot(size(rng), 1, 0.3, rng);
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(s.node_count), static_cast<Eigen::Index>(s.node_count));
    for (const auto& [u, v] : s.edges) a(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(v)) = a(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(u)) = 1.0;
    const auto r = eee_components(s, 3);
    for (int c = 0; c < 3; ++c) worst = std::max(worst, spectral_reference_gap(a, c, r.vectors.col(c)));
  }
  std::ostringstream d;
  d << "50 graphs, top 3 singular vectors, max |diff| " << worst;
  return {worst <= 1e-6, d.str()};
}

struct Benchmark {
  RunConfig cfg;
  std::vector<std::uint64_t> seeds;
  AblationTable main;
  double main_seconds = 0.0;
};

DomainPair benchmark_pair(const RunConfig& cfg, std::uint64_t seed) {
  return generate_evolving_sbm(cfg.source, cfg.target, stream_key({seed, 0x62656e6368ULL}));
}

AblationTable run_benchmark(const Benchmark& b, const std::vector<std::string>& switches) {
  std::vector<Ablation> sw;
  for (const auto& s : switches) sw.push_back(parse_ablation(s));
  return ablation_run([&](std::uint64_t seed) { return benchmark_pair(b.cfg, seed); }, b.cfg.train, sw, b.seeds);
}

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

Outcome transfer_gain(Benchmark& b) {
  const auto start = Clock::now();
  b.main = run_benchmark(b, {"no_pretrain"});
  b.main_seconds = seconds_since(start);
  const auto full = b.main.aucs("full"), base = b.main.aucs("no_pretrain");
  std::vector<double> diff;
  for (std::size_t k = 0; k < full.size(); ++k) diff.push_back(full[k] - base[k]);
  const double m = mean_of(diff);
  double ss = 0.0;
  for (double d : diff) ss += (d - m) * (d - m);
  const double sd = std::sqrt(ss / static_cast<double>(diff.size() - 1));
  double p = 1.0;
  if (sd > 0.0) {
    const double t = m / (sd / std::sqrt(static_cast<double>(diff.size())));
    boost::math::students_t dist(static_cast<double>(diff.size() - 1));
    p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  } else if (m != 0.0) {
    p = 0.0;
  }
  std::ostringstream d;
  d << "full " << mean_of(full) << " vs no_pretrain " << mean_of(base) << " over " << full.size()
    << " seeds, paired two-sided p " << p << ", " << b.main_seconds << " s";
  return {m > 0.0 && p < 0.05 && b.main_seconds < 900.0, d.str()};
}

Outcome ablation_directions(const Benchmark& b, AblationTable& rest) {
  rest = run_benchmark(b, {"no_m1", "no_unif_spatial", "no_unif_temporal"});
  const double full = mean_of(b.main.aucs("full"));
  bool ok = mean_of(b.main.aucs("no_pretrain")) <= full;
  std::ostringstream d;
  d << "full " << full << "; no_pretrain " << mean_of(b.main.aucs("no_pretrain"));
  for (const char* name : {"no_m1", "no_unif_spatial", "no_unif_temporal"}) {
    const double m = mean_of(rest.aucs(name));
    ok = ok && m <= full;
    d << "; " << name << ' ' << m;
  }
  return {ok, d.str()};
}

Outcome reproducibility(const Benchmark& b, const AblationTable& rest) {
  const AblationTable again = run_benchmark(b, {"no_pretrain"});
  std::size_t differ = 0;
  for (std::size_t k = 0; k < again.rows.size(); ++k) differ += again.rows[k].auc != b.main.rows[k].auc;
  // The full rows of the ablation pass are a third run of the same configuration.
  const auto full_again = rest.aucs("full"), full = b.main.aucs("full");
  for (std::size_t k = 0; k < full.size(); ++k) differ += full_again[k] != full[k];
  return {differ == 0 && again.rows.size() == b.main.rows.size(),
          std::to_string(again.rows.size() + full.size()) + " AUCs rerun, " + std::to_string(differ) + " differ"};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int n, const std::string& name, const Outcome& o) {
    std::printf("CRITERION %2d %s  %s: %s\n", n, o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
    failures += !o.pass;
  };
  auto guarded = [](const std::function<Outcome()>& f) {
    try {
      return f();
    } catch (const std::exception& e) {
      return Outcome{false, std::string("exception: ") + e.what()};
    }
  };
  report(1, "gradient check", guarded(gradients));
  report(2, "exact and entropic transport", guarded(wasserstein_solvers));
  report(3, "metric axioms", guarded(metric_axioms));
  report(4, "dynamic distance", guarded(dynamic_distance));
  report(5, "bound terms", guarded(bound_terms));
  report(6, "Monte Carlo Rademacher", guarded(rademacher));
  report(7, "domain-shift inequality", guarded(lemma1));
  report(8, "gradient reversal", guarded(reversal));
  report(9, "spectral components", guarded(spectral));

  Benchmark b;
  b.cfg = load_run_config(EVOLUNET_SAMPLES "/benchmark.ini");
  for (std::uint64_t s = 0; s < 10; ++s) b.seeds.push_back(s);
  AblationTable rest;
  report(10, "transfer gain", guarded([&] { return transfer_gain(b); }));
  report(11, "ablation directions", guarded([&] { return ablation_directions(b, rest); }));
  report(12, "bitwise reproducibility", guarded([&] { return reproducibility(b, rest); }));
  std::printf("%d of 12 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
