#pragma once

// Witness evaluation, the half-sample H0 test and simultaneous confidence
// bands for the conditional witness function.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <vector>

#include "causal_drf/error.hpp"
#include "causal_drf/forest.hpp"
#include "causal_drf/kernel.hpp"

namespace causal_drf {

// Anything that yields signed weights over its training outcomes.
template <typename M>
concept WeightedEmbeddingModel = requires(const M& m, const Eigen::VectorXd& x) {
  { m.aggregate_weights(x) } -> std::same_as<WeightBundle>;
  { m.outcomes() } -> std::convertible_to<const Eigen::MatrixXd&>;
  { m.kernel() } -> std::convertible_to<const KernelSpec&>;
};

struct TestResult {
  double statistic = 0.0;  // ||tau_hat||^2 = w' K w
  double quantile = 0.0;   // q, the (1 - alpha) quantile of the resample draws
  std::vector<double> resample_values;
  double alpha = 0.05;
  bool reject = false;
  // True when B * alpha < 1, so q is simply the largest draw.
  bool coarse_quantile = false;
};

struct WitnessBand {
  Eigen::MatrixXd grid;  // G x d
  Eigen::VectorXd estimate;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  double half_width = 0.0;
};

// tau_hat(y) = sum_i w_i k(Y_i, y) for every grid row.
inline Eigen::VectorXd witness_eval(const Eigen::VectorXd& w, const Eigen::MatrixXd& Y, const KernelSpec& spec,
                                    const Eigen::MatrixXd& grid) {
  if (w.size() != Y.rows()) throw DimensionMismatch("weight vector length differs from training size");
  if (grid.cols() != spec.outcome_dim || Y.cols() != spec.outcome_dim)
    throw DimensionMismatch("grid points must have the outcome dimension");
  std::vector<Eigen::Index> support;
  for (Eigen::Index i = 0; i < w.size(); ++i)
    if (w[i] != 0.0) support.push_back(i);
  const double inv = 1.0 / (2.0 * spec.bandwidth * spec.bandwidth);
  Eigen::VectorXd out(grid.rows());
  for (Eigen::Index g = 0; g < grid.rows(); ++g) {
    double s = 0.0;
    for (Eigen::Index i : support) {
      double sq = 0.0;
      for (Eigen::Index k = 0; k < Y.cols(); ++k) {
        const double d = Y(i, k) - grid(g, k);
        sq += d * d;
      }
      s += w[i] * std::exp(-sq * inv);
    }
    out[g] = s;
  }
  return out;
}

inline Eigen::VectorXd witness_eval(const WeightBundle& bundle, const Eigen::MatrixXd& Y, const KernelSpec& spec,
                                    const Eigen::MatrixXd& grid) {
  return witness_eval(bundle.aggregate, Y, spec, grid);
}

// w' K w, clamped at zero.
inline double test_statistic(const Eigen::VectorXd& w, const KernelMatrix& K) {
  if (w.size() != K.size()) throw DimensionMismatch("weight vector length differs from kernel matrix");
  return std::max(0.0, w.dot(K.values * w));
}

// (w^{S_b} - w)' K (w^{S_b} - w) for every group b.
inline std::vector<double> resample_stats(const WeightBundle& bundle, const KernelMatrix& K) {
  std::vector<double> out;
  out.reserve(bundle.groups.size());
  for (const auto& g : bundle.groups) {
    if (g.size() != K.size()) throw DimensionMismatch("group weight length differs from kernel matrix");
    out.push_back(test_statistic(g - bundle.aggregate, K));
  }
  return out;
}

// Kernel matrix restricted to the rows that carry weight in any group.
// Quadratic forms only need these entries, which keeps inference at
// O(|support|^2) rather than O(n^2).
struct SupportKernel {
  std::vector<Eigen::Index> rows;
  Eigen::MatrixXd values;

  SupportKernel(const WeightBundle& bundle, const Eigen::MatrixXd& Y, const KernelSpec& spec) {
    const Eigen::Index n = bundle.aggregate.size();
    for (Eigen::Index i = 0; i < n; ++i) {
      bool used = bundle.aggregate[i] != 0.0;
      for (const auto& g : bundle.groups) used = used || g[i] != 0.0;
      if (used) rows.push_back(i);
    }
    const auto m = static_cast<Eigen::Index>(rows.size());
    const double inv = 1.0 / (2.0 * spec.bandwidth * spec.bandwidth);
    values.resize(m, m);
    for (Eigen::Index a = 0; a < m; ++a) {
      values(a, a) = 1.0;
      for (Eigen::Index b = a + 1; b < m; ++b) values(a, b) = values(b, a) = kernel_rows(Y, rows[a], rows[b], inv);
    }
  }

  double quadratic_form(const Eigen::VectorXd& w) const {
    Eigen::VectorXd v(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t a = 0; a < rows.size(); ++a) v[static_cast<Eigen::Index>(a)] = w[rows[a]];
    return std::max(0.0, v.dot(values * v));
  }
};

// ceil((1 - alpha) B)-th order statistic of the draws (1-based).
inline double empirical_quantile(std::vector<double> draws, double alpha) {
  if (draws.empty()) throw InsufficientData("no resample draws");
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidConfig("alpha must lie in (0, 1)");
  const double B = static_cast<double>(draws.size());
  auto k = static_cast<std::size_t>(std::ceil((1.0 - alpha) * B - 1e-9));
  k = std::clamp<std::size_t>(k, 1, draws.size());
  std::nth_element(draws.begin(), draws.begin() + static_cast<std::ptrdiff_t>(k - 1), draws.end());
  return draws[k - 1];
}

inline TestResult h0_test(const WeightBundle& bundle, const Eigen::MatrixXd& Y, const KernelSpec& spec,
                          double alpha) {
  const SupportKernel K(bundle, Y, spec);
  TestResult r;
  r.alpha = alpha;
  r.statistic = K.quadratic_form(bundle.aggregate);
  r.resample_values.reserve(bundle.groups.size());
  for (const auto& g : bundle.groups) r.resample_values.push_back(K.quadratic_form(g - bundle.aggregate));
  r.quantile = empirical_quantile(r.resample_values, alpha);
  r.reject = r.statistic > r.quantile;
  r.coarse_quantile = static_cast<double>(bundle.groups.size()) * alpha < 1.0;
  return r;
}

// Rejects H0: P0(Y | X = x) = P1(Y | X = x) when ||tau_hat(x)||^2 exceeds q.
template <WeightedEmbeddingModel M, typename V>
TestResult h0_test(const M& model, const V& x, double alpha) {
  return h0_test(model.aggregate_weights(x), model.outcomes(), model.kernel(), alpha);
}

// Band of constant half-width sqrt(q C) around the witness estimate.
inline WitnessBand confidence_band(const WeightBundle& bundle, const TestResult& test, const Eigen::MatrixXd& Y,
                                   const KernelSpec& spec, const Eigen::MatrixXd& grid) {
  WitnessBand band;
  band.grid = grid;
  band.estimate = witness_eval(bundle.aggregate, Y, spec, grid);
  band.half_width = std::sqrt(test.quantile * spec.sup_value());
  band.lower = band.estimate.array() - band.half_width;
  band.upper = band.estimate.array() + band.half_width;
  return band;
}

template <WeightedEmbeddingModel M, typename V>
WitnessBand confidence_band(const M& model, const V& x, const Eigen::MatrixXd& grid, double alpha) {
  const WeightBundle bundle = model.aggregate_weights(x);
  const TestResult test = h0_test(bundle, model.outcomes(), model.kernel(), alpha);
  return confidence_band(bundle, test, model.outcomes(), model.kernel(), grid);
}

struct WitnessAnalysis {
  TestResult test;
  WitnessBand band;
};

// Test and band from a single weight computation.
template <WeightedEmbeddingModel M, typename V>
WitnessAnalysis analyze_witness(const M& model, const V& x, const Eigen::MatrixXd& grid, double alpha) {
  const WeightBundle bundle = model.aggregate_weights(x);
  WitnessAnalysis out;
  out.test = h0_test(bundle, model.outcomes(), model.kernel(), alpha);
  out.band = confidence_band(bundle, out.test, model.outcomes(), model.kernel(), grid);
  return out;
}

// `size` equally spaced points spanning [lo, hi], as a size x 1 grid.
inline Eigen::MatrixXd linear_grid(double lo, double hi, int size) {
  if (size < 2) throw InvalidConfig("grid needs at least two points");
  Eigen::MatrixXd grid(size, 1);
  for (int g = 0; g < size; ++g) grid(g, 0) = lo + (hi - lo) * g / (size - 1);
  return grid;
}

// Default grid for univariate outcomes: [min Y, max Y].
inline Eigen::MatrixXd default_grid(const Eigen::MatrixXd& Y, int size = 201) {
  if (Y.cols() != 1) throw DimensionMismatch("a default grid exists only for univariate outcomes; supply a grid");
  return linear_grid(Y.col(0).minCoeff(), Y.col(0).maxCoeff(), size);
}

}  // namespace causal_drf
