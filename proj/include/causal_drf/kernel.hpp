#pragma once

// Gaussian kernel on the outcome space, median-heuristic bandwidth and
// random Fourier features for the fast split criterion.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "causal_drf/error.hpp"
#include "causal_drf/rng.hpp"

namespace causal_drf {

// k(u, v) = exp(-||u - v||^2 / (2 sigma^2)).
struct KernelSpec {
  double bandwidth = 1.0;
  int outcome_dim = 1;

  KernelSpec() = default;
  KernelSpec(double sigma, int dim) : bandwidth(sigma), outcome_dim(dim) {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InvalidConfig("kernel bandwidth must be positive");
    if (dim < 1) throw InvalidConfig("outcome dimension must be positive");
  }

  // sup_y k(y, y); bounds |f(y)| <= ||f|| * sqrt(C) for f in the RKHS.
  double sup_value() const noexcept { return 1.0; }
};

namespace detail {

inline double row_squared_distance(const Eigen::MatrixXd& Y, Eigen::Index i, Eigen::Index j) noexcept {
  double s = 0.0;
  for (Eigen::Index k = 0; k < Y.cols(); ++k) {
    const double diff = Y(i, k) - Y(j, k);
    s += diff * diff;
  }
  return s;
}

}  // namespace detail

// Rows above this count are subsampled before the pairwise enumeration.
inline constexpr Eigen::Index kMedianHeuristicMaxRows = 5000;

// Median of all pairwise Euclidean distances between rows of Y.
inline double median_heuristic(const Eigen::MatrixXd& Y, std::uint64_t seed = 0) {
  if (Y.rows() < 2) throw InsufficientData("median heuristic needs at least two outcome rows");

  std::vector<Eigen::Index> rows(static_cast<std::size_t>(Y.rows()));
  std::iota(rows.begin(), rows.end(), Eigen::Index{0});
  if (Y.rows() > kMedianHeuristicMaxRows) {
    Rng rng = make_rng(seed, {0x6d656469616eULL});
    std::shuffle(rows.begin(), rows.end(), rng);
    rows.resize(kMedianHeuristicMaxRows);
    std::sort(rows.begin(), rows.end());
  }

  const std::size_t m = rows.size();
  std::vector<double> dist;
  dist.reserve(m * (m - 1) / 2);
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = a + 1; b < m; ++b)
      dist.push_back(std::sqrt(detail::row_squared_distance(Y, rows[a], rows[b])));

  const std::size_t half = dist.size() / 2;
  std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(half), dist.end());
  double median = dist[half];
  if (dist.size() % 2 == 0) {
    const double lower = *std::max_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(half));
    median = 0.5 * (lower + median);
  }
  if (median <= 0.0) {
    // Median can be zero with some distinct pairs when most rows coincide;
    // fall back to the smallest positive distance.
    double smallest = 0.0;
    for (double v : dist)
      if (v > 0.0 && (smallest == 0.0 || v < smallest)) smallest = v;
    if (smallest == 0.0) throw AllPointsIdentical();
    median = smallest;
  }
  return median;
}

template <typename A, typename B>
double gaussian_kernel(const Eigen::MatrixBase<A>& y1, const Eigen::MatrixBase<B>& y2, const KernelSpec& spec) {
  if (y1.size() != spec.outcome_dim || y2.size() != spec.outcome_dim)
    throw DimensionMismatch("kernel arguments must have the outcome dimension");
  const double sq = (y1 - y2).squaredNorm();
  return std::exp(-sq / (2.0 * spec.bandwidth * spec.bandwidth));
}

// Kernel between rows i and j of Y, without bounds checks.
inline double kernel_rows(const Eigen::MatrixXd& Y, Eigen::Index i, Eigen::Index j, double inv_two_sigma_sq) noexcept {
  return std::exp(-detail::row_squared_distance(Y, i, j) * inv_two_sigma_sq);
}

struct KernelMatrix {
  Eigen::MatrixXd values;
  KernelSpec spec;

  Eigen::Index size() const noexcept { return values.rows(); }
  double operator()(Eigen::Index i, Eigen::Index j) const { return values(i, j); }
};

inline KernelMatrix kernel_matrix(const Eigen::MatrixXd& Y, const KernelSpec& spec) {
  if (Y.cols() != spec.outcome_dim) throw DimensionMismatch("outcome matrix width differs from kernel dimension");
  const Eigen::Index n = Y.rows();
  const double inv = 1.0 / (2.0 * spec.bandwidth * spec.bandwidth);
  KernelMatrix K{Eigen::MatrixXd(n, n), spec};
  for (Eigen::Index i = 0; i < n; ++i) {
    K.values(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = kernel_rows(Y, i, j, inv);
      K.values(i, j) = v;
      K.values(j, i) = v;
    }
  }
  return K;
}

// Frequencies omega_s ~ N(0, sigma^-2 I_d), one per row.
struct FourierFeatures {
  Eigen::MatrixXd frequencies;  // S x d

  int count() const noexcept { return static_cast<int>(frequencies.rows()); }
  int dim() const noexcept { return static_cast<int>(frequencies.cols()); }
};

inline FourierFeatures sample_fourier_features(const KernelSpec& spec, int count, Rng& rng) {
  if (count < 1) throw InvalidConfig("Fourier feature count must be positive");
  std::normal_distribution<double> normal(0.0, 1.0 / spec.bandwidth);
  FourierFeatures ff{Eigen::MatrixXd(count, spec.outcome_dim)};
  for (int s = 0; s < count; ++s)
    for (int k = 0; k < spec.outcome_dim; ++k) ff.frequencies(s, k) = normal(rng);
  return ff;
}

inline FourierFeatures sample_fourier_features(const KernelSpec& spec, int count, std::uint64_t seed) {
  Rng rng(seed);
  return sample_fourier_features(spec, count, rng);
}

// Writes (cos(w_s . y), sin(w_s . y)) interleaved into out[0 .. 2S).
template <typename Y>
void fourier_embed_into(const Eigen::MatrixBase<Y>& y, const FourierFeatures& ff, double* out) {
  if (y.size() != ff.dim()) throw DimensionMismatch("outcome dimension differs from Fourier frequencies");
  for (int s = 0; s < ff.count(); ++s) {
    double phase = 0.0;
    for (int k = 0; k < ff.dim(); ++k) phase += ff.frequencies(s, k) * y(k);
    out[2 * s] = std::cos(phase);
    out[2 * s + 1] = std::sin(phase);
  }
}

template <typename Y>
Eigen::VectorXd fourier_embed(const Eigen::MatrixBase<Y>& y, const FourierFeatures& ff) {
  Eigen::VectorXd out(2 * ff.count());
  fourier_embed_into(y, ff, out.data());
  return out;
}

// (1/S) sum_s Re[phi_s(u) conj(phi_s(v))] from two interleaved embeddings.
inline double approximate_kernel(const Eigen::VectorXd& phi_u, const Eigen::VectorXd& phi_v) {
  if (phi_u.size() != phi_v.size() || phi_u.size() % 2 != 0)
    throw DimensionMismatch("embeddings must have equal even length");
  return phi_u.dot(phi_v) / static_cast<double>(phi_u.size() / 2);
}

}  // namespace causal_drf
