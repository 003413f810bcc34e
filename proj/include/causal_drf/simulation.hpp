#pragma once

// Data-generating processes, Monte Carlo ground truth and the benchmark
// study comparing the causal forest against two separately fitted forests.

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "causal_drf/config.hpp"
#include "causal_drf/dataset.hpp"
#include "causal_drf/error.hpp"
#include "causal_drf/forest.hpp"
#include "causal_drf/inference.hpp"
#include "causal_drf/kernel.hpp"
#include "causal_drf/parallel.hpp"
#include "causal_drf/rng.hpp"

namespace causal_drf::sim {

enum class Regime {
  // Benchmark regimes on Unif(0,1)^5.
  Nothing = 1,
  Confounding = 2,
  Effect = 3,
  Both = 4,
  // Motivational examples on Unif(2,3)^5 with P(W=1) = 0.5.
  NoEffect = 11,
  MeanShift = 12,
  VarianceShrink = 13,
  MeanAndVariance = 14,
};

inline constexpr int kCovariates = 5;

inline bool is_motivational(Regime r) noexcept { return static_cast<int>(r) > 10; }

inline Regime regime_from_string(std::string_view s) {
  if (s == "1") return Regime::Nothing;
  if (s == "2") return Regime::Confounding;
  if (s == "3") return Regime::Effect;
  if (s == "4") return Regime::Both;
  if (s == "m1") return Regime::NoEffect;
  if (s == "m2") return Regime::MeanShift;
  if (s == "m3") return Regime::VarianceShrink;
  if (s == "m4") return Regime::MeanAndVariance;
  throw InvalidConfig("unknown regime: " + std::string(s));
}

inline std::string to_string(Regime r) {
  const int v = static_cast<int>(r);
  return v > 10 ? "m" + std::to_string(v - 10) : std::to_string(v);
}

// Density of Beta(2, 4): 20 x (1 - x)^3 on [0, 1].
inline double beta24_density(double x) noexcept {
  if (x < 0.0 || x > 1.0) return 0.0;
  const double c = 1.0 - x;
  return 20.0 * x * c * c * c;
}

inline double eta(double x) noexcept { return 1.0 + 1.0 / (1.0 + std::exp(-20.0 * (x - 1.0 / 3.0))); }

template <typename V>
double propensity(Regime r, const V& x) {
  switch (r) {
    case Regime::Confounding:
    case Regime::Both:
      return 0.25 * (1.0 + beta24_density(x[2]));
    default:
      return 0.5;
  }
}

template <typename V>
double effect(Regime r, const V& x) {
  switch (r) {
    case Regime::Effect:
    case Regime::Both:
      return eta(x[0]) * eta(x[1]);
    default:
      return 0.0;
  }
}

struct GaussianLaw {
  double mean = 0.0;
  double sd = 1.0;

  double density(double y) const noexcept {
    const double z = (y - mean) / sd;
    return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * M_PI));
  }
};

// Conditional outcome laws of the two arms at covariate value x.
struct ArmLaws {
  GaussianLaw control;
  GaussianLaw treated;
};

template <typename V>
ArmLaws conditional_laws(Regime r, const V& x) {
  switch (r) {
    case Regime::NoEffect:
      return {{0.0, 1.0}, {0.0, 1.0}};
    case Regime::MeanShift:
      return {{0.0, 1.0}, {x[0], 1.0}};
    case Regime::VarianceShrink:
      return {{0.0, 1.0}, {0.0, 1.0 / x[0]}};
    case Regime::MeanAndVariance:
      return {{0.0, 1.0}, {x[0], x[0]}};
    default: {
      const double base = 2.0 * x[2] - 1.0;
      const double t = effect(r, x);
      return {{base - 0.5 * t, 1.0}, {base + 0.5 * t, 1.0}};
    }
  }
}

// n i.i.d. draws of (X, W, Y); p = 5, d = 1.
inline Dataset simulate_dataset(Regime r, int n, Rng& rng) {
  if (n < 1) throw InvalidConfig("n must be positive");
  const bool motivational = is_motivational(r);
  std::uniform_real_distribution<double> unif(motivational ? 2.0 : 0.0, motivational ? 3.0 : 1.0);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  Dataset d;
  d.X.resize(n, kCovariates);
  d.W.resize(static_cast<std::size_t>(n));
  d.Y.resize(n, 1);
  Eigen::VectorXd x(kCovariates);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < kCovariates; ++j) x[j] = unif(rng);
    d.X.row(i) = x.transpose();
    const bool treated = coin(rng) < propensity(r, x);
    d.W[static_cast<std::size_t>(i)] = treated;
    const ArmLaws laws = conditional_laws(r, x);
    const GaussianLaw& law = treated ? laws.treated : laws.control;
    d.Y(i, 0) = law.mean + law.sd * normal(rng);
  }
  return d;
}

inline Eigen::VectorXd benchmark_test_point() {
  Eigen::VectorXd x(kCovariates);
  x << 0.7, 0.3, 0.5, 0.68, 0.43;
  return x;
}

inline Eigen::VectorXd motivational_test_point() { return Eigen::VectorXd::Constant(kCovariates, 2.5); }

inline Eigen::VectorXd test_point(Regime r) {
  return is_motivational(r) ? motivational_test_point() : benchmark_test_point();
}

struct MotivationalSample {
  Dataset data;
  ArmLaws truth;  // conditional laws at x = 2.5 * 1
};

inline MotivationalSample motivational_example(int id, int n, Rng& rng) {
  if (id < 1 || id > 4) throw InvalidConfig("motivational example id must be 1..4");
  const auto r = static_cast<Regime>(10 + id);
  MotivationalSample s;
  s.data = simulate_dataset(r, n, rng);
  s.truth = conditional_laws(r, motivational_test_point());
  return s;
}

struct ArmDraws {
  std::vector<double> treated;
  std::vector<double> control;
};

template <typename V>
ArmDraws draw_conditional_outcomes(Regime r, const V& x, int m, Rng& rng) {
  if (m < 1) throw InvalidConfig("number of ground-truth draws must be positive");
  const ArmLaws laws = conditional_laws(r, x);
  std::normal_distribution<double> normal(0.0, 1.0);
  ArmDraws out;
  out.treated.resize(static_cast<std::size_t>(m));
  out.control.resize(static_cast<std::size_t>(m));
  for (auto& y : out.treated) y = laws.treated.mean + laws.treated.sd * normal(rng);
  for (auto& y : out.control) y = laws.control.mean + laws.control.sd * normal(rng);
  return out;
}

// (1/m) sum_j k(Y1_j, y) - (1/m) sum_j k(Y0_j, y) on each grid point.
inline Eigen::VectorXd witness_from_draws(const ArmDraws& draws, const Eigen::MatrixXd& grid, const KernelSpec& spec) {
  if (grid.cols() != 1 || spec.outcome_dim != 1) throw DimensionMismatch("ground truth is univariate");
  const double inv = 1.0 / (2.0 * spec.bandwidth * spec.bandwidth);
  auto mean_embedding = [&](const std::vector<double>& ys, double y) {
    double s = 0.0;
    for (double v : ys) s += std::exp(-(v - y) * (v - y) * inv);
    return s / static_cast<double>(ys.size());
  };
  Eigen::VectorXd out(grid.rows());
  for (Eigen::Index g = 0; g < grid.rows(); ++g)
    out[g] = mean_embedding(draws.treated, grid(g, 0)) - mean_embedding(draws.control, grid(g, 0));
  return out;
}

inline constexpr int kTruthDraws = 8000;

template <typename V>
Eigen::VectorXd true_witness(Regime r, const V& x, const Eigen::MatrixXd& grid, const KernelSpec& spec, int m,
                             Rng& rng) {
  return witness_from_draws(draw_conditional_outcomes(r, x, m, rng), grid, spec);
}

inline double mae(const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth) {
  if (estimate.size() != truth.size()) throw LengthMismatch("estimate and truth differ in length");
  if (estimate.size() == 0) throw LengthMismatch("empty evaluation grid");
  return (estimate - truth).cwiseAbs().mean();
}

// Baseline: one plain-MMD forest per arm, combined into signed weights over
// the full training set. Group b of the difference pairs group b of each arm.
class TwoForestModel {
 public:
  TwoForestModel(std::shared_ptr<const Dataset> data, CausalDRFModel treated, std::vector<int> treated_rows,
                 CausalDRFModel control, std::vector<int> control_rows)
      : data_(std::move(data)),
        treated_(std::move(treated)),
        control_(std::move(control)),
        treated_rows_(std::move(treated_rows)),
        control_rows_(std::move(control_rows)) {}

  const Dataset& dataset() const noexcept { return *data_; }
  const Eigen::MatrixXd& outcomes() const noexcept { return data_->Y; }
  const KernelSpec& kernel() const noexcept { return treated_.kernel(); }
  std::size_t num_groups() const noexcept { return treated_.num_groups(); }
  const CausalDRFModel& treated() const noexcept { return treated_; }
  const CausalDRFModel& control() const noexcept { return control_; }

  template <typename V>
  WeightBundle aggregate_weights(const V& x) const {
    const WeightBundle t = treated_.aggregate_weights(x);
    const WeightBundle c = control_.aggregate_weights(x);
    WeightBundle out;
    out.query = t.query;
    out.aggregate = scatter(t.aggregate, c.aggregate);
    out.groups.reserve(t.groups.size());
    for (std::size_t b = 0; b < t.groups.size(); ++b) out.groups.push_back(scatter(t.groups[b], c.groups[b]));
    return out;
  }

 private:
  Eigen::VectorXd scatter(const Eigen::VectorXd& wt, const Eigen::VectorXd& wc) const {
    Eigen::VectorXd w = Eigen::VectorXd::Zero(data_->size());
    for (std::size_t k = 0; k < treated_rows_.size(); ++k) w[treated_rows_[k]] = wt[static_cast<Eigen::Index>(k)];
    for (std::size_t k = 0; k < control_rows_.size(); ++k) w[control_rows_[k]] = -wc[static_cast<Eigen::Index>(k)];
    return w;
  }

  std::shared_ptr<const Dataset> data_;
  CausalDRFModel treated_;
  CausalDRFModel control_;
  std::vector<int> treated_rows_;
  std::vector<int> control_rows_;
};

// Both arm forests share B and the pooled median-heuristic bandwidth.
inline TwoForestModel fit_two_forest(std::shared_ptr<const Dataset> data, const ForestConfig& config,
                                     unsigned threads = 0) {
  data->validate();
  std::vector<int> rows[2];
  for (Eigen::Index i = 0; i < data->size(); ++i) rows[data->W[static_cast<std::size_t>(i)]].push_back(static_cast<int>(i));
  const KernelSpec kernel(median_heuristic(data->Y, config.seed), data->outcome_dim());
  ForestConfig arm_config = config;
  arm_config.split_mode = SplitMode::PlainMmd;
  arm_config.seed = derive_seed(config.seed, {7, 1});
  auto treated = fit(data->subset(rows[1]), arm_config, kernel, threads);
  arm_config.seed = derive_seed(config.seed, {7, 0});
  auto control = fit(data->subset(rows[0]), arm_config, kernel, threads);
  return TwoForestModel(std::move(data), std::move(treated), std::move(rows[1]), std::move(control),
                        std::move(rows[0]));
}

enum class Method { CausalDrf, TwoDrf };

inline std::string to_string(Method m) { return m == Method::CausalDrf ? "causal_drf" : "two_drf"; }

inline Method method_from_string(std::string_view s) {
  if (s == "causal" || s == "causal_drf") return Method::CausalDrf;
  if (s == "two-drf" || s == "two_drf") return Method::TwoDrf;
  throw InvalidConfig("unknown method: " + std::string(s));
}

inline ForestConfig desk_config() {
  ForestConfig c;
  c.num_trees = 1000;
  c.num_groups = 50;
  c.min_leaf_per_arm = 5;
  return c;
}

inline ForestConfig paper_scale_config() {
  ForestConfig c = desk_config();
  c.num_trees = 2500;
  return c;
}

inline constexpr int kGridSize = 201;

struct ReplicationResult {
  double mae = 0.0;
  bool covered = false;  // band contains the truth at every grid point
  bool reject = false;
  double statistic = 0.0;
  double quantile = 0.0;
  double bandwidth = 0.0;
};

struct Replication {
  ReplicationResult result;
  Eigen::MatrixXd grid;
  Eigen::VectorXd truth;
  WitnessAnalysis analysis;
};

template <WeightedEmbeddingModel M>
Replication evaluate_replication(const M& model, Regime r, double alpha, std::uint64_t truth_seed) {
  const Eigen::VectorXd x = test_point(r);
  Rng rng(truth_seed);
  const ArmDraws draws = draw_conditional_outcomes(r, x, kTruthDraws, rng);
  double lo = draws.treated.front(), hi = lo;
  for (const auto* v : {&draws.treated, &draws.control})
    for (double y : *v) {
      lo = std::min(lo, y);
      hi = std::max(hi, y);
    }
  Replication rep;
  rep.grid = linear_grid(lo, hi, kGridSize);
  rep.truth = witness_from_draws(draws, rep.grid, model.kernel());
  rep.analysis = analyze_witness(model, x, rep.grid, alpha);
  const WitnessBand& band = rep.analysis.band;
  rep.result.mae = mae(band.estimate, rep.truth);
  rep.result.covered = ((band.lower.array() <= rep.truth.array()) && (rep.truth.array() <= band.upper.array())).all();
  rep.result.reject = rep.analysis.test.reject;
  rep.result.statistic = rep.analysis.test.statistic;
  rep.result.quantile = rep.analysis.test.quantile;
  rep.result.bandwidth = model.kernel().bandwidth;
  return rep;
}

// Seeds of replication r depend on (master_seed, r) only.
struct ReplicationSeeds {
  std::uint64_t data, forest, truth;
};

inline ReplicationSeeds replication_seeds(std::uint64_t master_seed, int replication) {
  const auto r = static_cast<std::uint64_t>(replication);
  return {derive_seed(master_seed, {r, 0}), derive_seed(master_seed, {r, 1}), derive_seed(master_seed, {r, 2})};
}

inline Replication run_replication(Regime r, int n, Method method, const ForestConfig& config,
                                   std::uint64_t master_seed, int replication, unsigned threads = 1) {
  const ReplicationSeeds seeds = replication_seeds(master_seed, replication);
  Rng data_rng(seeds.data);
  auto data = std::make_shared<const Dataset>(simulate_dataset(r, n, data_rng));
  ForestConfig cfg = config;
  cfg.seed = seeds.forest;
  if (method == Method::CausalDrf) {
    cfg.split_mode = SplitMode::CausalWeightedMmd;
    return evaluate_replication(fit(data, cfg, std::nullopt, threads), r, cfg.significance, seeds.truth);
  }
  return evaluate_replication(fit_two_forest(data, cfg, threads), r, cfg.significance, seeds.truth);
}

struct StudyReport {
  Regime regime = Regime::Nothing;
  int n = 0;
  int n_sims = 0;
  Method method = Method::CausalDrf;
  double mae_mean = 0.0;
  double coverage_rate = 0.0;
  double coverage_se = 0.0;  // sqrt(p (1 - p) / n_sims)
  double rejection_rate = 0.0;
  std::uint64_t seed = 0;
  double runtime_seconds = 0.0;
  std::vector<ReplicationResult> replications;
};

inline StudyReport run_study(Regime r, int n, int n_sims, Method method, const ForestConfig& config,
                             std::uint64_t master_seed, unsigned threads = 0) {
  if (n_sims < 1) throw InvalidConfig("n_sims must be at least 1");
  const auto start = std::chrono::steady_clock::now();
  if (threads == 0) threads = default_thread_count();
  StudyReport report;
  report.regime = r;
  report.n = n;
  report.n_sims = n_sims;
  report.method = method;
  report.seed = master_seed;
  report.replications.resize(static_cast<std::size_t>(n_sims));
  parallel_for(static_cast<std::size_t>(n_sims), threads, [&](std::size_t k) {
    report.replications[k] = run_replication(r, n, method, config, master_seed, static_cast<int>(k), 1).result;
  });
  double mae_sum = 0.0;
  int covered = 0, rejected = 0;
  for (const auto& rep : report.replications) {
    mae_sum += rep.mae;
    covered += rep.covered;
    rejected += rep.reject;
  }
  report.mae_mean = mae_sum / n_sims;
  report.coverage_rate = static_cast<double>(covered) / n_sims;
  report.coverage_se = std::sqrt(report.coverage_rate * (1.0 - report.coverage_rate) / n_sims);
  report.rejection_rate = static_cast<double>(rejected) / n_sims;
  report.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace causal_drf::sim
