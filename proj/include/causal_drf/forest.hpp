#pragma once

// Half-sampled forest: B groups of L honest trees, each group grown on its
// own Bernoulli(1/2) half-sample. Aggregated weights give the point estimate,
// per-group weights give the resampling draws used for inference.

#include <Eigen/Dense>

#include <bit>
#include <cstdint>
#include <numeric>
#include <memory>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "causal_drf/config.hpp"
#include "causal_drf/dataset.hpp"
#include "causal_drf/error.hpp"
#include "causal_drf/kernel.hpp"
#include "causal_drf/parallel.hpp"
#include "causal_drf/rng.hpp"
#include "causal_drf/tree.hpp"

namespace causal_drf {

// Content hash of every row. Per-row random draws are keyed on these so the
// fitted forest does not depend on the order of the training rows.
inline std::vector<std::uint64_t> row_keys(const Dataset& data) {
  std::vector<std::uint64_t> keys(static_cast<std::size_t>(data.size()));
  auto feed = [](std::uint64_t h, double v) { return mix_seed(h ^ std::bit_cast<std::uint64_t>(v + 0.0)); };
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    std::uint64_t h = 0x243f6a8885a308d3ULL;
    for (Eigen::Index j = 0; j < data.X.cols(); ++j) h = feed(h, data.X(i, j));
    h = mix_seed(h ^ data.W[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < data.Y.cols(); ++j) h = feed(h, data.Y(i, j));
    keys[static_cast<std::size_t>(i)] = h;
  }
  return keys;
}

// S = {i : U_i = 1} with U_i ~ Bernoulli(1/2), drawn independently per row.
inline std::vector<int> draw_half_sample(std::span<const std::uint64_t> keys, std::uint64_t seed) {
  std::vector<int> rows;
  rows.reserve(keys.size() / 2 + 1);
  for (std::size_t i = 0; i < keys.size(); ++i)
    if (mix_seed(seed ^ mix_seed(keys[i])) >> 63) rows.push_back(static_cast<int>(i));
  return rows;
}

inline std::vector<int> draw_half_sample(std::size_t n, std::uint64_t seed) {
  std::vector<std::uint64_t> keys(n);
  for (std::size_t i = 0; i < n; ++i) keys[i] = i;
  return draw_half_sample(keys, seed);
}

inline constexpr int kMaxRedraws = 100;

namespace detail {

inline bool arms_at_least(const Dataset& data, std::span<const int> rows, SplitMode mode, int floor) {
  if (mode == SplitMode::PlainMmd) return static_cast<int>(rows.size()) >= floor;
  int treated = 0;
  for (int r : rows) treated += data.W[static_cast<std::size_t>(r)];
  return treated >= floor && static_cast<int>(rows.size()) - treated >= floor;
}

}  // namespace detail

// Half-sample redrawn until each arm holds at least 2*kappa rows.
inline std::vector<int> draw_valid_half_sample(const Dataset& data, std::span<const std::uint64_t> keys,
                                               const ForestConfig& config, std::uint64_t seed) {
  for (int attempt = 0; attempt < kMaxRedraws; ++attempt) {
    auto rows = draw_half_sample(keys, derive_seed(seed, {static_cast<std::uint64_t>(attempt)}));
    if (detail::arms_at_least(data, rows, config.split_mode, 2 * config.populate_floor())) return rows;
  }
  throw InsufficientData("no half-sample with 2*kappa rows per arm after 100 draws");
}

// s_n rows drawn without replacement from `pool`, redrawn until each arm
// holds at least 2*kappa rows.
inline std::vector<int> draw_tree_subsample(const Dataset& data, std::span<const std::uint64_t> keys,
                                            std::span<const int> pool, const ForestConfig& config,
                                            std::uint64_t seed) {
  const int size = config.subsample_size(static_cast<int>(pool.size()));
  std::vector<std::pair<std::uint64_t, int>> keyed(pool.size());
  for (int attempt = 0; attempt < kMaxRedraws; ++attempt) {
    const std::uint64_t s = derive_seed(seed, {static_cast<std::uint64_t>(attempt)});
    for (std::size_t k = 0; k < pool.size(); ++k)
      keyed[k] = {mix_seed(s ^ mix_seed(keys[static_cast<std::size_t>(pool[k])])), pool[k]};
    std::partial_sort(keyed.begin(), keyed.begin() + size, keyed.end());
    std::vector<int> rows(static_cast<std::size_t>(size));
    for (int k = 0; k < size; ++k) rows[static_cast<std::size_t>(k)] = keyed[static_cast<std::size_t>(k)].second;
    std::sort(rows.begin(), rows.end());
    if (detail::arms_at_least(data, rows, config.split_mode, 2 * config.populate_floor())) return rows;
  }
  throw InsufficientData("no tree subsample with 2*kappa rows per arm after 100 draws");
}

struct TreeGroup {
  std::vector<int> half_sample;  // S_b, sorted row indices
  std::vector<Tree> trees;       // L trees
};

// Aggregate weights and the B per-group weights at one query point.
struct WeightBundle {
  Eigen::VectorXd aggregate;           // w
  std::vector<Eigen::VectorXd> groups; // w^{S_b}
  Eigen::VectorXd query;
};

class CausalDRFModel {
 public:
  CausalDRFModel(std::shared_ptr<const Dataset> data, KernelSpec kernel, ForestConfig config,
                 std::vector<TreeGroup> groups)
      : data_(std::move(data)), kernel_(kernel), config_(config), groups_(std::move(groups)) {}

  const Dataset& dataset() const noexcept { return *data_; }
  std::shared_ptr<const Dataset> dataset_ptr() const noexcept { return data_; }
  const Eigen::MatrixXd& outcomes() const noexcept { return data_->Y; }
  const KernelSpec& kernel() const noexcept { return kernel_; }
  const ForestConfig& config() const noexcept { return config_; }
  const std::vector<TreeGroup>& groups() const noexcept { return groups_; }
  std::size_t num_groups() const noexcept { return groups_.size(); }

  std::size_t num_trees() const noexcept {
    std::size_t n = 0;
    for (const auto& g : groups_) n += g.trees.size();
    return n;
  }

  template <typename V>
  WeightBundle aggregate_weights(const V& x) const {
    if (static_cast<int>(x.size()) != data_->num_covariates())
      throw DimensionMismatch("query point must have one coordinate per covariate");
    const Eigen::Index n = data_->size();
    WeightBundle bundle;
    bundle.query = Eigen::VectorXd(x.size());
    for (Eigen::Index j = 0; j < bundle.query.size(); ++j) bundle.query[j] = x[j];
    bundle.aggregate = Eigen::VectorXd::Zero(n);
    bundle.groups.reserve(groups_.size());
    for (const auto& g : groups_) {
      Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
      const double scale = 1.0 / static_cast<double>(g.trees.size());
      for (const auto& t : g.trees) accumulate_tree_weights(t, bundle.query, data_->W, scale, w);
      bundle.aggregate += w;
      bundle.groups.push_back(std::move(w));
    }
    bundle.aggregate /= static_cast<double>(groups_.size());
    return bundle;
  }

 private:
  std::shared_ptr<const Dataset> data_;
  KernelSpec kernel_;
  ForestConfig config_;
  std::vector<TreeGroup> groups_;
};

// Fits B groups of L trees. When `kernel` is empty the bandwidth comes from
// the median heuristic on the pooled training outcomes.
inline CausalDRFModel fit(std::shared_ptr<const Dataset> data, const ForestConfig& config,
                          std::optional<KernelSpec> kernel = std::nullopt, unsigned threads = 0) {
  const Dataset& d = *data;
  d.validate();
  config.validate(d.num_covariates());
  const int kappa = config.populate_floor();
  {
    std::vector<int> all(static_cast<std::size_t>(d.size()));
    std::iota(all.begin(), all.end(), 0);
    if (!detail::arms_at_least(d, all, config.split_mode, 4 * kappa))
      throw InsufficientData("each treatment arm needs at least 4*kappa observations");
  }

  const auto keys = row_keys(d);
  if (!kernel) kernel = KernelSpec(median_heuristic(d.Y, config.seed), d.outcome_dim());
  if (kernel->outcome_dim != d.outcome_dim()) throw DimensionMismatch("kernel dimension differs from outcomes");

  const int B = config.num_groups;
  const int L = config.trees_per_group();
  std::vector<TreeGroup> groups(static_cast<std::size_t>(B));
  for (int b = 0; b < B; ++b) {
    auto& g = groups[static_cast<std::size_t>(b)];
    g.half_sample = draw_valid_half_sample(d, keys, config, derive_seed(config.seed, {1, static_cast<std::uint64_t>(b)}));
    if (config.subsample_size(static_cast<int>(g.half_sample.size())) < 4 * kappa)
      throw InvalidConfig("tree subsample size s_n falls below 4*kappa; increase beta or n");
    g.trees.resize(static_cast<std::size_t>(L));
  }

  if (threads == 0) threads = default_thread_count();
  parallel_for(static_cast<std::size_t>(B) * static_cast<std::size_t>(L), threads, [&](std::size_t t) {
    const auto b = t / static_cast<std::size_t>(L);
    const auto l = t % static_cast<std::size_t>(L);
    auto& g = groups[b];
    const std::uint64_t tree_seed = derive_seed(config.seed, {2, b, l});
    const auto sub = draw_tree_subsample(d, keys, g.half_sample, config, tree_seed);
    g.trees[l] = build_tree(sub, d, config, *kernel, mix_seed(tree_seed), keys);
  });
  return CausalDRFModel(std::move(data), *kernel, config, std::move(groups));
}

inline CausalDRFModel fit(const Dataset& data, const ForestConfig& config,
                          std::optional<KernelSpec> kernel = std::nullopt, unsigned threads = 0) {
  return fit(std::make_shared<const Dataset>(data), config, kernel, threads);
}

}  // namespace causal_drf
