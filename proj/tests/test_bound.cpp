#include "evolunet/bound.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace evolunet;

namespace {

BoundInputs zeroed(std::vector<double> src, std::vector<double> tgt) {
  BoundInputs in;
  in.src_errors = std::move(src);
  in.tgt_errors = std::move(tgt);
  in.dyn_w = 0.0;
  in.rademacher = 0.0;
  in.big_o_constant = 0.0;
  in.rho = 0.0;
  return in;
}

// Straight enumeration over sign vectors, written independently of the library loop.
double enumerate_rademacher(const Eigen::MatrixXd& preds) {
  const int n = static_cast<int>(preds.cols());
  double total = 0.0;
  for (int mask = 0; mask < (1 << n); ++mask) {
    Eigen::VectorXd sigma(n);
    for (int i = 0; i < n; ++i) sigma(i) = (mask & (1 << i)) ? 1.0 : -1.0;
    total += (preds * sigma).maxCoeff() / n;
  }
  return total / (1 << n);
}

}  // namespace

TEST(MinErrorBound, SingleTimestampHalfOfErrorSum) {
  EXPECT_NEAR(theorem1_bound(zeroed({0.2}, {0.4})).total, 0.3, 1e-15);
}

TEST(MinErrorBound, DiscrepancyOnlyTerm) {
  auto in = zeroed({0, 0}, {0, 0});
  in.dyn_w = 0.1;
  const auto r = theorem1_bound(in);
  EXPECT_NEAR(r.total, 0.3, 1e-15);
  EXPECT_NEAR(r.term_discrepancy, 0.3, 1e-15);
}

TEST(MinErrorBound, TotalIsSumOfTerms) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int trial = 0; trial < 1000; ++trial) {
    BoundInputs in;
    const std::size_t T = 1 + trial % 7;
    for (std::size_t i = 0; i < T; ++i) in.src_errors.push_back(u(rng)), in.tgt_errors.push_back(u(rng));
    in.dyn_w = u(rng);
    in.rademacher = u(rng);
    in.rho = u(rng);
    in.B = u(rng);
    in.n_tilde = 1 + trial;
    in.big_o_constant = u(rng);
    const auto r = theorem1_bound(in);
    EXPECT_NEAR(r.total, r.term_min_error + r.term_discrepancy + r.term_rademacher + r.term_concentration, 1e-12);
    const double c = in.big_o_constant * (in.rho * in.B / std::sqrt(in.n_tilde) +
                                          std::sqrt(std::log(1.0 / in.delta) / in.n_tilde));
    EXPECT_NEAR(r.term_concentration, c, 1e-12);
  }
}

TEST(MinErrorBound, RejectsBadInputs) {
  EXPECT_THROW(theorem1_bound(zeroed({}, {})), std::invalid_argument);
  EXPECT_THROW(theorem1_bound(zeroed({0.1}, {0.1, 0.2})), std::invalid_argument);
  EXPECT_THROW(theorem1_bound(zeroed({-0.1}, {0.1})), std::invalid_argument);
  auto in = zeroed({0.1}, {0.1});
  in.delta = 1.0;
  EXPECT_THROW(theorem1_bound(in), std::invalid_argument);
}

TEST(AveragedBound, FirstTermIsAverage) {
  EXPECT_NEAR(wu_he_bound(zeroed({0.2}, {0.4})).term_min_error, 0.3, 1e-15);
}

TEST(AveragedBound, DiffersOnlyInConcentrationWhenDiscrepancyZero) {
  auto in = zeroed({0.2}, {0.4});
  in.rho = 1.0;
  in.big_o_constant = 1.0;
  in.n_tilde = 50;
  in.m_total = 80;
  const auto a = theorem1_bound(in), b = wu_he_bound(in);
  EXPECT_EQ(a.term_min_error, b.term_min_error);
  EXPECT_EQ(a.term_discrepancy, b.term_discrepancy);
  EXPECT_EQ(a.term_rademacher, b.term_rademacher);
  EXPECT_NE(a.term_concentration, b.term_concentration);
  EXPECT_NEAR(b.term_concentration, std::sqrt(std::log(20.0) / 160.0), 1e-15);
}

TEST(AveragedBound, OutlierInflatesAverageNotMinimum) {
  auto in = zeroed({0.1, 0.1, 10.0, 0.1}, {0.1, 0.1, 10.0, 0.1});
  const double min_term = theorem1_bound(in).term_min_error;
  const double avg_term = wu_he_bound(in).term_min_error;
  EXPECT_NEAR(min_term, 0.1, 1e-15);
  EXPECT_NEAR(avg_term, (0.6 + 20.0) / 8.0, 1e-15);
  EXPECT_LT(10.0 * min_term, avg_term);
}

TEST(AveragedBound, MinimumNeverExceedsAverage) {
  std::mt19937_64 rng(2);
  std::exponential_distribution<double> e(3.0);
  for (int trial = 0; trial < 10000; ++trial) {
    auto in = zeroed({}, {});
    const std::size_t T = 1 + trial % 10;
    for (std::size_t i = 0; i < T; ++i) in.src_errors.push_back(e(rng)), in.tgt_errors.push_back(e(rng));
    ASSERT_LE(theorem1_bound(in).term_min_error, wu_he_bound(in).term_min_error + 1e-15) << "trial " << trial;
  }
}

TEST(Rademacher, ConstantSingleHypothesisIsZero) {
  const Eigen::MatrixXd preds = Eigen::MatrixXd::Constant(1, 6, 0.7);
  EXPECT_NEAR(rademacher_exact(preds).value, 0.0, 1e-15);
}

TEST(Rademacher, SignPairGivesHalfC) {
  const double c = 1.7;
  Eigen::MatrixXd preds(2, 2);
  preds << c, c, -c, -c;
  EXPECT_NEAR(rademacher_exact(preds).value, c / 2.0, 1e-15);
}

TEST(Rademacher, ExactMatchesIndependentEnumeration) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::MatrixXd preds(1 + trial % 5, 1 + trial % 9);
    for (Eigen::Index i = 0; i < preds.size(); ++i) preds.data()[i] = g(rng);
    EXPECT_NEAR(rademacher_exact(preds).value, enumerate_rademacher(preds), 1e-12);
  }
}

TEST(Rademacher, MonteCarloWithinThreeStandardErrors) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  int misses = 0;
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::MatrixXd preds(4, 1 + trial % 10);
    for (Eigen::Index i = 0; i < preds.size(); ++i) preds.data()[i] = g(rng);
    const double exact = rademacher_exact(preds).value;
    const auto mc = rademacher_monte_carlo(preds, 2000, 100 + trial);
    if (std::abs(mc.value - exact) > 3.0 * mc.standard_error + 1e-12) ++misses;
  }
  // At 3 standard errors about 0.3% of honest estimates miss; allow one.
  EXPECT_LE(misses, 1);
}

TEST(Rademacher, MonteCarloDeterministicPerSeed) {
  Eigen::MatrixXd preds = Eigen::MatrixXd::Random(3, 15);
  const auto a = rademacher_monte_carlo(preds, 500, 9), b = rademacher_monte_carlo(preds, 500, 9);
  EXPECT_EQ(a.value, b.value);
  EXPECT_FALSE(a.exact);
  EXPECT_TRUE(rademacher_estimate(preds.leftCols(12), 10, 1).exact);
  EXPECT_FALSE(rademacher_estimate(preds, 10, 1).exact);
}

TEST(EmpiricalError, HandExamples) {
  Eigen::MatrixXd onehot(3, 3);
  onehot << 1, 0, 0, 0, 1, 0, 0, 0, 1;
  const std::map<std::size_t, int> labels{{0, 0}, {1, 1}, {2, 2}};
  EXPECT_EQ(empirical_error(onehot, labels, LossKind::zero_one), 0.0);
  EXPECT_EQ(empirical_error(onehot, labels, LossKind::cross_entropy), 0.0);
  EXPECT_NEAR(empirical_error(Eigen::MatrixXd::Constant(3, 3, 1.0 / 3.0), labels, LossKind::cross_entropy),
              std::log(3.0), 1e-15);
  const std::map<std::size_t, int> wrong{{0, 1}, {1, 2}, {2, 0}};
  EXPECT_EQ(empirical_error(onehot, wrong, LossKind::zero_one), 1.0);
  EXPECT_THROW(empirical_error(onehot, {{5, 0}}, LossKind::zero_one), std::invalid_argument);
  EXPECT_THROW(empirical_error(onehot, {}, LossKind::zero_one), std::invalid_argument);
}

TEST(DomainShiftInequality, IdenticalDomainsAndZeroScorer) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  Eigen::MatrixXd x(8, 2);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
  Eigen::VectorXd y = x.col(0);
  const auto a = EmpiricalDistribution::uniform(x);
  const auto same = lemma1_check(Eigen::Vector2d(1.0, -0.5), 1.0, a, y, a, y);
  EXPECT_EQ(same.lhs, 0.0);
  EXPECT_TRUE(same.holds);
  Eigen::MatrixXd x2 = x.array() + 1.0;
  const auto zero = lemma1_check(Eigen::Vector2d::Zero(), 1.0, a, Eigen::VectorXd::Zero(8),
                                 EmpiricalDistribution::uniform(x2), Eigen::VectorXd::Zero(8));
  EXPECT_EQ(zero.lhs, 0.0);
  EXPECT_TRUE(zero.holds);
}

TEST(DomainShiftInequality, HoldsOnRandomGaussianDomains) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> u(0.1, 3.0);
    Eigen::MatrixXd xa(7, 3), xb(6, 3);
    for (Eigen::Index i = 0; i < xa.size(); ++i) xa.data()[i] = g(rng);
    for (Eigen::Index i = 0; i < xb.size(); ++i) xb.data()[i] = u(rng) + g(rng);
    Eigen::Vector3d w(g(rng), g(rng), g(rng));
    Eigen::VectorXd ya = xa * Eigen::Vector3d(g(rng), g(rng), g(rng)), yb(6);
    for (Eigen::Index i = 0; i < 6; ++i) yb(i) = g(rng);
    const auto c = lemma1_check(w, u(rng), EmpiricalDistribution::uniform(xa), ya, EmpiricalDistribution::uniform(xb), yb);
    EXPECT_TRUE(c.holds) << "seed " << seed << " lhs " << c.lhs << " rhs " << c.rhs;
  }
}
