#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "causal_drf/simulation.hpp"
#include "oracles.hpp"

using namespace causal_drf;
using namespace causal_drf::sim;

namespace {

double closed_form_witness(const ArmLaws& laws, double y, double sigma) {
  return oracle::gaussian_mean_embedding(laws.treated.mean, laws.treated.sd, y, sigma) -
         oracle::gaussian_mean_embedding(laws.control.mean, laws.control.sd, y, sigma);
}

ForestConfig quick_config() {
  ForestConfig c = desk_config();
  c.num_trees = 100;
  c.num_groups = 20;
  return c;
}

}  // namespace

TEST(Regimes, ParseAndPrint) {
  for (const char* s : {"1", "2", "3", "4", "m1", "m2", "m3", "m4"}) EXPECT_EQ(to_string(regime_from_string(s)), s);
  EXPECT_THROW(regime_from_string("5"), InvalidConfig);
  EXPECT_EQ(method_from_string("causal"), Method::CausalDrf);
  EXPECT_EQ(method_from_string("two-drf"), Method::TwoDrf);
  EXPECT_THROW(method_from_string("grf"), InvalidConfig);
}

TEST(Regimes, PropensityClosedForm) {
  Eigen::VectorXd x = Eigen::VectorXd::Constant(5, 0.5);
  EXPECT_DOUBLE_EQ(propensity(Regime::Confounding, x), 0.5625);
  EXPECT_DOUBLE_EQ(propensity(Regime::Both, x), 0.5625);
  EXPECT_DOUBLE_EQ(propensity(Regime::Nothing, x), 0.5);
  EXPECT_DOUBLE_EQ(propensity(Regime::Effect, x), 0.5);
}

TEST(Regimes, PropensityRange) {
  // Beta(2,4) density peaks at x = 1/4 with value 20 * 0.25 * 0.75^3.
  const double peak = 0.25 * (1.0 + 20.0 * 0.25 * 0.421875);
  EXPECT_NEAR(peak, 0.7773, 1e-4);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(5);
  for (int k = 0; k <= 1000; ++k) {
    x[2] = k / 1000.0;
    const double e = propensity(Regime::Both, x);
    EXPECT_GE(e, 0.25);
    EXPECT_LE(e, peak + 1e-12);
  }
}

TEST(Regimes, EffectAtCentre) {
  EXPECT_DOUBLE_EQ(eta(1.0 / 3.0), 1.5);
  const Eigen::VectorXd x = benchmark_test_point();
  EXPECT_NEAR(effect(Regime::Effect, x), 2.678, 2e-3);
  EXPECT_NEAR(eta(0.7), 1.999, 1e-3);
  EXPECT_NEAR(eta(0.3), 1.339, 1e-3);
  EXPECT_EQ(effect(Regime::Confounding, x), 0.0);
}

TEST(SimulateDataset, ShapesAndRanges) {
  Rng rng(1);
  const Dataset d = simulate_dataset(Regime::Both, 500, rng);
  EXPECT_EQ(d.size(), 500);
  EXPECT_EQ(d.num_covariates(), 5);
  EXPECT_EQ(d.outcome_dim(), 1);
  EXPECT_GE(d.X.minCoeff(), 0.0);
  EXPECT_LE(d.X.maxCoeff(), 1.0);
  const Dataset m = simulate_dataset(Regime::MeanShift, 500, rng);
  EXPECT_GE(m.X.minCoeff(), 2.0);
  EXPECT_LE(m.X.maxCoeff(), 3.0);
}

TEST(SimulateDataset, NoEffectRegimeUncorrelatedResidual) {
  Rng rng(2);
  const int n = 100000;
  const Dataset d = simulate_dataset(Regime::Nothing, n, rng);
  Eigen::VectorXd w(n), r(n);
  for (int i = 0; i < n; ++i) {
    w[i] = d.W[static_cast<std::size_t>(i)];
    r[i] = d.Y(i, 0) - (2.0 * d.X(i, 2) - 1.0);
  }
  const double rho = ((w.array() - w.mean()) * (r.array() - r.mean())).sum() /
                     std::sqrt((w.array() - w.mean()).square().sum() * (r.array() - r.mean()).square().sum());
  EXPECT_LE(std::abs(rho), 0.01);
  EXPECT_NEAR(w.mean(), 0.5, 0.01);
}

TEST(SimulateDataset, EmpiricalPropensityTracksFormula) {
  Rng rng(3);
  const int n = 100000;
  const Dataset d = simulate_dataset(Regime::Confounding, n, rng);
  // Bin on X3 around 0.25 and 0.9.
  double t_lo = 0, c_lo = 0, t_hi = 0, c_hi = 0;
  for (int i = 0; i < n; ++i) {
    const double x3 = d.X(i, 2);
    if (std::abs(x3 - 0.25) < 0.02) (d.W[static_cast<std::size_t>(i)] ? t_lo : c_lo) += 1;
    if (std::abs(x3 - 0.9) < 0.02) (d.W[static_cast<std::size_t>(i)] ? t_hi : c_hi) += 1;
  }
  EXPECT_NEAR(t_lo / (t_lo + c_lo), 0.777, 0.04);
  EXPECT_NEAR(t_hi / (t_hi + c_hi), 0.2525, 0.04);
}

TEST(Motivational, LawsAtTestPoint) {
  Rng rng(4);
  const auto ex2 = motivational_example(2, 10, rng);
  EXPECT_DOUBLE_EQ(ex2.truth.treated.mean, 2.5);
  const auto ex3 = motivational_example(3, 10, rng);
  EXPECT_DOUBLE_EQ(ex3.truth.treated.sd * ex3.truth.treated.sd, 0.16);
  const auto ex4 = motivational_example(4, 10, rng);
  EXPECT_DOUBLE_EQ(ex4.truth.treated.mean, 2.5);
  EXPECT_DOUBLE_EQ(ex4.truth.treated.sd, 2.5);
  EXPECT_THROW(motivational_example(5, 10, rng), InvalidConfig);
}

TEST(Motivational, NoEffectArmsIdenticallyDistributed) {
  Rng rng(5);
  const auto ex = motivational_example(1, 20000, rng);
  std::vector<double> treated, control;
  for (Eigen::Index i = 0; i < ex.data.size(); ++i)
    (ex.data.W[static_cast<std::size_t>(i)] ? treated : control).push_back(ex.data.Y(i, 0));
  EXPECT_GT(oracle::ks_two_sample_pvalue(treated, control), 0.01);
}

TEST(Motivational, MeanShiftArmsDiffer) {
  Rng rng(6);
  const auto ex = motivational_example(2, 4000, rng);
  std::vector<double> treated, control;
  for (Eigen::Index i = 0; i < ex.data.size(); ++i)
    (ex.data.W[static_cast<std::size_t>(i)] ? treated : control).push_back(ex.data.Y(i, 0));
  EXPECT_LT(oracle::ks_two_sample_pvalue(treated, control), 1e-6);
}

TEST(TrueWitness, NoEffectIsNearZero) {
  Rng rng(7);
  const Eigen::MatrixXd grid = linear_grid(-4, 4, 201);
  const Eigen::VectorXd tau =
      true_witness(Regime::Nothing, benchmark_test_point(), grid, KernelSpec(1.0, 1), kTruthDraws, rng);
  EXPECT_LE(tau.cwiseAbs().maxCoeff(), 0.05);
}

TEST(TrueWitness, EqualVarianceShiftIsAntisymmetric) {
  const Eigen::VectorXd x = benchmark_test_point();
  const ArmLaws laws = conditional_laws(Regime::Effect, x);
  EXPECT_NEAR(laws.treated.mean - laws.control.mean, effect(Regime::Effect, x), 1e-12);
  const double mid = 0.5 * (laws.treated.mean + laws.control.mean);
  Eigen::MatrixXd grid(2 * 50, 1);
  for (int k = 0; k < 50; ++k) {
    grid(2 * k, 0) = mid + 0.1 * k;
    grid(2 * k + 1, 0) = mid - 0.1 * k;
  }
  Rng rng(8);
  const Eigen::VectorXd tau = true_witness(Regime::Effect, x, grid, KernelSpec(1.0, 1), 200000, rng);
  for (int k = 0; k < 50; ++k) EXPECT_NEAR(tau[2 * k], -tau[2 * k + 1], 0.02);
  // Closed form is exactly antisymmetric.
  for (int k = 0; k < 50; ++k)
    EXPECT_NEAR(closed_form_witness(laws, grid(2 * k, 0), 1.0), -closed_form_witness(laws, grid(2 * k + 1, 0), 1.0),
                1e-14);
}

TEST(TrueWitness, ErrorShrinksLikeRootM) {
  const Eigen::VectorXd x = benchmark_test_point();
  const ArmLaws laws = conditional_laws(Regime::Both, x);
  const Eigen::MatrixXd grid = linear_grid(-4, 4, 41);
  const KernelSpec spec(1.0, 1);
  auto error = [&](int m, std::uint64_t seed) {
    Rng rng(seed);
    const Eigen::VectorXd tau = true_witness(Regime::Both, x, grid, spec, m, rng);
    double e = 0.0;
    for (int g = 0; g < grid.rows(); ++g) e += std::abs(tau[g] - closed_form_witness(laws, grid(g, 0), 1.0));
    return e / static_cast<double>(grid.rows());
  };
  double small = 0.0, large = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    small += error(800, seed);
    large += error(8000, 1000 + seed);
  }
  const double ratio = small / large;
  EXPECT_GT(ratio, std::sqrt(10.0) / 1.5);
  EXPECT_LT(ratio, std::sqrt(10.0) * 1.5);
}

TEST(Mae, Examples) {
  Eigen::VectorXd a(4);
  a << 0.1, -0.2, 0.3, 0.0;
  EXPECT_EQ(mae(a, a), 0.0);
  EXPECT_NEAR(mae(a.array() + 0.1, a), 0.1, 1e-15);
  EXPECT_THROW(mae(a, Eigen::VectorXd::Zero(3)), LengthMismatch);
}

TEST(Mae, ScalesWithAbsoluteFactor) {
  Rng rng(9);
  std::normal_distribution<double> z(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXd a(30), b(30);
    for (int i = 0; i < 30; ++i) {
      a[i] = z(rng);
      b[i] = z(rng);
    }
    const double c = z(rng);
    EXPECT_NEAR(mae(c * a, c * b), std::abs(c) * mae(a, b), 1e-12);
  }
}

TEST(Study, SingleReplicationReportEqualsReplication) {
  const ForestConfig c = quick_config();
  const auto report = run_study(Regime::Both, 250, 1, Method::CausalDrf, c, 17, 1);
  const auto rep = run_replication(Regime::Both, 250, Method::CausalDrf, c, 17, 0);
  EXPECT_EQ(report.mae_mean, rep.result.mae);
  EXPECT_EQ(report.coverage_rate, rep.result.covered ? 1.0 : 0.0);
  EXPECT_EQ(report.rejection_rate, rep.result.reject ? 1.0 : 0.0);
  EXPECT_EQ(report.coverage_se, 0.0);
}

TEST(Study, ReproducibleAndThreadIndependent) {
  const ForestConfig c = quick_config();
  const auto a = run_study(Regime::Effect, 250, 4, Method::CausalDrf, c, 5, 1);
  const auto b = run_study(Regime::Effect, 250, 4, Method::CausalDrf, c, 5, 3);
  EXPECT_EQ(a.mae_mean, b.mae_mean);
  EXPECT_EQ(a.coverage_rate, b.coverage_rate);
  for (int r = 0; r < 4; ++r) EXPECT_EQ(a.replications[r].statistic, b.replications[r].statistic);
}

TEST(Study, ReplicationSeedsDependOnlyOnMasterAndIndex) {
  const auto a = replication_seeds(3, 7);
  const auto b = replication_seeds(3, 7);
  const auto c = replication_seeds(3, 8);
  EXPECT_EQ(a.data, b.data);
  EXPECT_EQ(a.forest, b.forest);
  EXPECT_NE(a.data, c.data);
  EXPECT_NE(a.data, a.forest);
  // Replication k of a longer study equals replication k of a shorter one.
  const ForestConfig cfg = quick_config();
  const auto s2 = run_study(Regime::Nothing, 250, 2, Method::CausalDrf, cfg, 9, 1);
  const auto s3 = run_study(Regime::Nothing, 250, 3, Method::CausalDrf, cfg, 9, 1);
  EXPECT_EQ(s2.replications[1].mae, s3.replications[1].mae);
}

TEST(Study, CoverageSeIsBinomial) {
  const auto r = run_study(Regime::Nothing, 250, 4, Method::CausalDrf, quick_config(), 2, 1);
  EXPECT_NEAR(r.coverage_se, std::sqrt(r.coverage_rate * (1 - r.coverage_rate) / 4), 1e-15);
  EXPECT_GE(r.coverage_rate, 0.0);
  EXPECT_LE(r.coverage_rate, 1.0);
  EXPECT_THROW(run_study(Regime::Nothing, 250, 0, Method::CausalDrf, quick_config(), 2, 1), InvalidConfig);
}

TEST(TwoForest, WeightsAreArmDifferences) {
  Rng rng(10);
  const auto data = std::make_shared<const Dataset>(simulate_dataset(Regime::Both, 300, rng));
  const auto model = fit_two_forest(data, quick_config(), 1);
  EXPECT_EQ(model.num_groups(), 20u);
  const auto b = model.aggregate_weights(benchmark_test_point());
  double s1 = 0, s0 = 0;
  for (Eigen::Index i = 0; i < data->size(); ++i) {
    const double w = b.aggregate[i];
    if (data->W[static_cast<std::size_t>(i)]) {
      EXPECT_GE(w, 0.0);
      s1 += w;
    } else {
      EXPECT_LE(w, 0.0);
      s0 += w;
    }
  }
  EXPECT_NEAR(s1, 1.0, 1e-12);
  EXPECT_NEAR(s0, -1.0, 1e-12);
  EXPECT_EQ(b.groups.size(), 20u);
}

TEST(Configs, DeskAndFullScale) {
  EXPECT_EQ(desk_config().num_trees, 1000);
  EXPECT_EQ(desk_config().num_groups, 50);
  EXPECT_EQ(desk_config().min_leaf_per_arm, 5);
  EXPECT_EQ(paper_scale_config().num_trees, 2500);
  EXPECT_EQ(paper_scale_config().trees_per_group(), 50);
}
