#pragma once

// Hand-rolled generators for property tests.

#include <Eigen/Dense>

#include <random>
#include <vector>

#include "causal_drf/dataset.hpp"
#include "causal_drf/rng.hpp"

namespace fixture {

// n rows, p Unif(0,1) covariates, Bernoulli(1/2) treatment and d outcomes
// N(effect * W * x_0, 1). Both arms are guaranteed at least `min_arm` rows.
inline causal_drf::Dataset random_dataset(int n, int p, int d, causal_drf::Rng& rng, double effect = 0.0,
                                          int min_arm = 0) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> z(0.0, 1.0);
  causal_drf::Dataset data;
  data.X.resize(n, p);
  data.Y.resize(n, d);
  data.W.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) data.X(i, j) = u(rng);
    data.W[static_cast<std::size_t>(i)] = u(rng) < 0.5;
  }
  for (int i = 0; i < min_arm && 2 * i + 1 < n; ++i) {
    data.W[static_cast<std::size_t>(2 * i)] = 1;
    data.W[static_cast<std::size_t>(2 * i + 1)] = 0;
  }
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < d; ++k) data.Y(i, k) = effect * data.W[static_cast<std::size_t>(i)] * data.X(i, 0) + z(rng);
  return data;
}

inline std::vector<int> iota(int n) {
  std::vector<int> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = i;
  return v;
}

}  // namespace fixture
