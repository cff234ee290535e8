#include "evolunet/bound.hpp"
#include "evolunet/config.hpp"
#include "evolunet/dataset_io.hpp"
#include "evolunet/sbm.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

namespace fs = std::filesystem;
using namespace evolunet;

namespace {

struct Run {
  int status = -1;
  std::string out;
};

Run run(const std::string& args) {
  Run r;
  const std::string cmd = std::string(EVOLUNET_CLI) + " " + args + " 2>&1";
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int raw = pclose(p);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string value_of(const std::string& text, const std::string& key) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line))
    if (line.rfind(key + " = ", 0) == 0) return line.substr(key.size() + 3);
  return {};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("evolunet_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  fs::path dir_;
};

const std::string kToy = std::string(EVOLUNET_SAMPLES) + "/toy.ini";

}  // namespace

TEST_F(Cli, GenerateIsDeterministic) {
  ASSERT_EQ(run("--config " + kToy + " --seed 3 --out " + path("a") + " generate").status, 0);
  ASSERT_EQ(run("--config " + kToy + " --seed 3 --out " + path("b") + " generate").status, 0);
  for (const auto& e : fs::recursive_directory_iterator(path("a"))) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), path("a"));
    EXPECT_EQ(read_file(e.path()), read_file(fs::path(path("b")) / rel)) << rel;
  }
}

TEST_F(Cli, GenerateWritesOneDirectoryPerSnapshot) {
  std::ofstream(path("cfg.ini")) << "[graph-core.source]\nT = 10\nnodes_per_block = 6\n"
                                    "[graph-core.target]\nT = 10\nnodes_per_block = 6\n";
  const auto r = run("--config " + path("cfg.ini") + " --format csv --out " + path("d") + " generate");
  ASSERT_EQ(r.status, 0) << r.out;
  auto count = [](const fs::path& p) {
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(p)) n += e.is_directory();
    return n;
  };
  EXPECT_EQ(count(fs::path(path("d")) / "source"), 10u);
  EXPECT_EQ(count(fs::path(path("d")) / "target"), 11u);
  EXPECT_EQ(r.out.rfind("seed,domain,snapshot,", 0), 0u);
}

TEST_F(Cli, DiscrepancyOfIdenticalStaticDomainsIsZero) {
  SbmConfig c;
  c.nodes_per_block = 5;
  c.T = 3;
  c.few_shot_k = 2;
  DynamicGraph g = generate_evolving_sbm(c, c, 1).source;
  for (auto& s : g.snapshots) s.edges = g.snapshots[0].edges, s.features = g.snapshots[0].features;
  write_dynamic_graph(g, path("static"), g.snapshots.size());
  const auto r = run("discrepancy " + path("static") + " " + path("static") + " --depth 2");
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_EQ(value_of(r.out, "measure"), "wasserstein_exact");
  EXPECT_EQ(std::stod(value_of(r.out, "dynamic_distance")), 0.0) << r.out;
}

TEST_F(Cli, DiscrepancyMeasuresGiveLabeledRows) {
  ASSERT_EQ(run("--config " + kToy + " --out " + path("d") + " generate").status, 0);
  const auto w = run("--format csv discrepancy " + path("d") + "/source " + path("d") + "/target --depth 1");
  const auto m = run("--format csv discrepancy " + path("d") + "/source " + path("d") +
                     "/target --depth 1 --measure mmd --csv " + path("mmd.csv"));
  ASSERT_EQ(w.status, 0) << w.out;
  ASSERT_EQ(m.status, 0) << m.out;
  EXPECT_NE(w.out.find(",wasserstein_exact,src_consecutive,1,"), std::string::npos) << w.out;
  EXPECT_NE(m.out.find(",mmd,tgt_consecutive,3,"), std::string::npos) << m.out;
  EXPECT_NE(m.out.find(",mmd,dynamic_total,"), std::string::npos);
  EXPECT_EQ(read_file(path("mmd.csv")), m.out);
  EXPECT_NE(w.out, m.out);
}

TEST_F(Cli, BoundSampleMatchesHandEvaluation) {
  const auto r = run("bound " + std::string(EVOLUNET_SAMPLES) + "/bound_inputs.txt");
  ASSERT_EQ(r.status, 0) << r.out;
  // 0.5*min(0.42, 0.35, 0.29) + 1.5*3*0.04 + 0.05 + (2/10 + sqrt(ln 20 / 100))
  const double expect = 0.5 * 0.29 + 1.5 * 3 * 0.04 + 0.05 + (1.0 * 2.0 / 10.0 + std::sqrt(std::log(20.0) / 100.0));
  EXPECT_NEAR(std::stod(value_of(r.out, "total")), expect, 1e-12) << r.out;
}

TEST_F(Cli, BoundSideBySide) {
  const auto r = run("bound " + std::string(EVOLUNET_SAMPLES) + "/bound_inputs.txt --bound eq1");
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_NE(r.out.find("average_error_term"), std::string::npos);
  EXPECT_NE(r.out.find("min_error_term"), std::string::npos);
  EXPECT_NE(r.out.find("side_by_side"), std::string::npos);
  const auto in = load_bound_inputs(std::string(EVOLUNET_SAMPLES) + "/bound_inputs.txt");
  EXPECT_NE(r.out.find("eq1_wu_he total = " + format_real(wu_he_bound(in).total)), std::string::npos);
}

TEST_F(Cli, MalformedBoundInputsReportLine) {
  std::ofstream(path("bad.txt")) << "eps_src = 0.1\neps_tgt = 0.2\nrho = lots\n";
  const auto r = run("bound " + path("bad.txt"));
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.out.find("line 3"), std::string::npos) << r.out;
}

TEST_F(Cli, UnknownConfigKeyReportsLine) {
  std::ofstream(path("bad.ini")) << "[train-harness]\n\nepochs = 4\n";
  const auto r = run("--config " + path("bad.ini") + " --out " + path("d") + " generate");
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.out.find("line 3"), std::string::npos) << r.out;
}

TEST_F(Cli, TrainThenEvaluateReproducesAuc) {
  ASSERT_EQ(run("--config " + kToy + " --seed 4 --out " + path("d") + " generate").status, 0);
  const auto a = run("--config " + kToy + " --seed 2 --out " + path("m1") + " train " + path("d"));
  const auto b = run("--config " + kToy + " --seed 2 --out " + path("m2") + " train " + path("d"));
  ASSERT_EQ(a.status, 0) << a.out;
  ASSERT_EQ(b.status, 0) << b.out;
  const std::string auc = value_of(a.out, "auc");
  ASSERT_FALSE(auc.empty());
  EXPECT_EQ(auc, value_of(b.out, "auc"));
  const auto e = run("--seed 2 evaluate " + path("d") + " --model " + path("m1"));
  ASSERT_EQ(e.status, 0) << e.out;
  EXPECT_EQ(value_of(e.out, "auc"), auc);
  EXPECT_TRUE(fs::exists(path("m1") + "/epochs.csv"));
  EXPECT_EQ(read_file(path("m1") + "/model.ckpt"), read_file(path("m2") + "/model.ckpt"));
}

TEST_F(Cli, AblateWritesTable) {
  ASSERT_EQ(run("--config " + kToy + " --out " + path("d") + " generate").status, 0);
  const auto r = run("--config " + kToy + " --format csv ablate " + path("d") + " --switches no_pretrain --seeds 0-1");
  ASSERT_EQ(r.status, 0) << r.out;
  std::istringstream in(r.out);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), 5u) << r.out;
  EXPECT_EQ(lines[0], "config,seed,auc");
  EXPECT_EQ(lines[3].rfind("no_pretrain,0,", 0), 0u);
}

TEST_F(Cli, EeeHasNodeAndKColumns) {
  ASSERT_EQ(run("--config " + kToy + " --out " + path("d") + " generate").status, 0);
  const auto r = run("eee " + path("d") + " --snapshot 1 --k 3");
  ASSERT_EQ(r.status, 0) << r.out;
  std::istringstream in(r.out);
  std::string header, row;
  std::getline(in, header);
  EXPECT_EQ(header, "node,sv1,sv2,sv3");
  std::size_t rows = 0;
  while (std::getline(in, row)) {
    if (row.rfind("warning", 0) == 0) continue;
    EXPECT_EQ(std::count(row.begin(), row.end(), ','), 3) << row;
    ++rows;
  }
  EXPECT_EQ(rows, 20u);
}

TEST_F(Cli, MissingSubcommandFails) { EXPECT_NE(run("").status, 0); }
