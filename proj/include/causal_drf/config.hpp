#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

#include "causal_drf/error.hpp"

namespace causal_drf {

enum class SplitMode {
  // Signed weighted MMD between treated-minus-control embeddings of the children.
  CausalWeightedMmd,
  // Unweighted MMD of the original distributional forest (single population).
  PlainMmd,
};

inline std::string_view to_string(SplitMode m) {
  return m == SplitMode::CausalWeightedMmd ? "causal_weighted_mmd" : "plain_mmd";
}

inline SplitMode split_mode_from_string(std::string_view s) {
  if (s == "causal_weighted_mmd" || s == "causal") return SplitMode::CausalWeightedMmd;
  if (s == "plain_mmd" || s == "plain") return SplitMode::PlainMmd;
  throw InvalidConfig("unknown split mode: " + std::string(s));
}

struct ForestConfig {
  int num_trees = 1000;           // N
  int num_groups = 50;            // B, one half-sample per group
  int min_leaf_per_arm = 5;       // kappa
  double alpha_regularity = 0.05; // each child keeps this fraction of its parent
  double subsample_exponent = 0.9;
  int mtry = 0;                   // 0 selects ceil(sqrt(p))
  int fourier_features = 10;      // S
  double honesty_fraction = 0.5;
  SplitMode split_mode = SplitMode::CausalWeightedMmd;
  std::uint64_t seed = 1;
  double significance = 0.05;
  // Plain mode only: minimum build rows per child, the distributional
  // forest's default node size.
  int plain_min_node_size = 15;

  // L = round(N / B).
  int trees_per_group() const noexcept {
    return static_cast<int>(std::lround(static_cast<double>(num_trees) / num_groups));
  }

  // Minimum build rows per arm (per child in plain mode) of an admissible split.
  int build_floor() const noexcept {
    return split_mode == SplitMode::CausalWeightedMmd ? min_leaf_per_arm : plain_min_node_size;
  }

  // Minimum populate rows per arm in a leaf; plain mode only drops empty leaves.
  int populate_floor() const noexcept {
    return split_mode == SplitMode::CausalWeightedMmd ? min_leaf_per_arm : 1;
  }

  int effective_mtry(int p) const noexcept {
    if (mtry > 0) return mtry < p ? mtry : p;
    const int m = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(p))));
    return m < p ? m : p;
  }

  // s_n = ceil(m^beta) for a pool of m rows, capped at m.
  int subsample_size(int pool) const noexcept {
    const int s = static_cast<int>(std::ceil(std::pow(static_cast<double>(pool), subsample_exponent) - 1e-9));
    return s < pool ? s : pool;
  }

  void validate(int p) const {
    if (num_groups < 2) throw InvalidConfig("number of groups B must be at least 2");
    if (num_trees < num_groups) throw InvalidConfig("number of trees N must be at least B");
    if (trees_per_group() < 1) throw InvalidConfig("trees per group must be at least 1");
    if (min_leaf_per_arm < 1) throw InvalidConfig("kappa must be at least 1");
    if (plain_min_node_size < 1) throw InvalidConfig("plain-mode minimum node size must be at least 1");
    if (!(alpha_regularity > 0.0 && alpha_regularity <= 0.2))
      throw InvalidConfig("alpha regularity must lie in (0, 0.2]");
    if (!(subsample_exponent > 0.0 && subsample_exponent < 1.0))
      throw InvalidConfig("subsample exponent beta must lie in (0, 1)");
    if (mtry < 0 || mtry > p) throw InvalidConfig("mtry must lie in [1, p] (0 for default)");
    if (fourier_features < 1) throw InvalidConfig("Fourier feature count must be positive");
    if (!(honesty_fraction > 0.0 && honesty_fraction < 1.0))
      throw InvalidConfig("honesty fraction must lie in (0, 1)");
    if (!(significance > 0.0 && significance < 1.0)) throw InvalidConfig("significance must lie in (0, 1)");
  }
};

}  // namespace causal_drf
