#pragma once

// Honest trees grown with the weighted-MMD split criterion.
//
// Split scores use random Fourier features: every build observation is
// embedded once per tree as 2S reals (cos, sin pairs) and a node scan keeps
// running per-arm sums of those embeddings, so evaluating all thresholds of
// one feature costs O(m S) after sorting.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "causal_drf/config.hpp"
#include "causal_drf/dataset.hpp"
#include "causal_drf/error.hpp"
#include "causal_drf/kernel.hpp"
#include "causal_drf/rng.hpp"

namespace causal_drf {

struct Split {
  int feature = -1;
  double threshold = 0.0;
  double score = 0.0;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  int build_count = 0;       // build-sample observations that reached this node
  std::vector<int> members;  // populate-sample rows (leaves only)

  bool is_leaf() const noexcept { return feature < 0; }
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  std::vector<int> build_rows;
  std::vector<int> populate_rows;
  SplitMode mode = SplitMode::CausalWeightedMmd;

  template <typename V>
  int leaf_index(const V& x) const {
    int id = 0;
    while (!nodes[static_cast<std::size_t>(id)].is_leaf()) {
      const TreeNode& nd = nodes[static_cast<std::size_t>(id)];
      id = x[nd.feature] < nd.threshold ? nd.left : nd.right;
    }
    return id;
  }

  std::size_t num_leaves() const noexcept {
    return static_cast<std::size_t>(
        std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
  }
};

struct RowWeight {
  int row = 0;
  double weight = 0.0;
};

// Sparse per-tree weights: nonzero only on the query leaf's members.
using TreeWeights = std::vector<RowWeight>;

// nu_i = W_i / #(side, W=1) - (1 - W_i) / #(side, W=0) for each row of `side`.
inline std::vector<double> group_split_weights(std::span<const int> side, std::span<const std::uint8_t> W) {
  std::size_t treated = 0;
  for (int i : side) treated += W[static_cast<std::size_t>(i)];
  const std::size_t control = side.size() - treated;
  if (treated == 0 || control == 0) throw EmptyTreatmentArm("split side lacks a treatment arm");
  std::vector<double> nu(side.size());
  for (std::size_t k = 0; k < side.size(); ++k)
    nu[k] = W[static_cast<std::size_t>(side[k])] ? 1.0 / static_cast<double>(treated)
                                                  : -1.0 / static_cast<double>(control);
  return nu;
}

namespace detail {

// sum_{i in side} nu_i phi(Y_i), as 2S reals.
inline Eigen::VectorXd weighted_embedding_sum(const Eigen::MatrixXd& embedded, std::span<const int> side,
                                              std::span<const std::uint8_t> W, SplitMode mode) {
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(embedded.rows());
  if (mode == SplitMode::CausalWeightedMmd) {
    const auto nu = group_split_weights(side, W);
    for (std::size_t k = 0; k < side.size(); ++k) sum += nu[k] * embedded.col(side[k]);
  } else {
    if (side.empty()) throw EmptyTreatmentArm("split side is empty");
    for (int i : side) sum += embedded.col(i);
    sum /= static_cast<double>(side.size());
  }
  return sum;
}

}  // namespace detail

// Fourier-approximated weighted MMD between two children:
//   |L||R| / (|L|+|R|)^2 * (1/S) sum_s |sum_L nu phi_s - sum_R nu phi_s|^2.
// `embedded` holds one 2S-column per dataset row.
inline double split_criterion(const Eigen::MatrixXd& embedded, std::span<const int> left, std::span<const int> right,
                              std::span<const std::uint8_t> W,
                              SplitMode mode = SplitMode::CausalWeightedMmd) {
  const Eigen::VectorXd diff = detail::weighted_embedding_sum(embedded, left, W, mode) -
                               detail::weighted_embedding_sum(embedded, right, W, mode);
  const double nl = static_cast<double>(left.size());
  const double nr = static_cast<double>(right.size());
  const double features = static_cast<double>(embedded.rows() / 2);
  return nl * nr / ((nl + nr) * (nl + nr)) * diff.squaredNorm() / features;
}

namespace detail {

// Sampling key for every row; ties in sorts are broken by (key, row).
inline std::uint64_t key_of(std::span<const std::uint64_t> keys, int row) noexcept {
  return keys.empty() ? static_cast<std::uint64_t>(row) : keys[static_cast<std::size_t>(row)];
}

inline int arm_of(const Dataset& data, int row, SplitMode mode) noexcept {
  return mode == SplitMode::CausalWeightedMmd ? data.W[static_cast<std::size_t>(row)] : 0;
}

inline bool leaf_populated(const std::vector<int>& members, const Dataset& data, SplitMode mode, int kappa) {
  if (mode == SplitMode::PlainMmd) return static_cast<int>(members.size()) >= kappa;
  int treated = 0;
  for (int i : members) treated += data.W[static_cast<std::size_t>(i)];
  const int control = static_cast<int>(members.size()) - treated;
  return treated >= kappa && control >= kappa;
}

}  // namespace detail

// Best admissible split of a node, or nullopt when none exists.
//
// Draws mtry candidate features without replacement and scans every midpoint
// between consecutive distinct values. A candidate is admissible when both
// children keep at least alpha * m build rows and at least kappa rows of each
// arm (of the single population in plain mode). Ties go to the smaller
// feature index, then the smaller threshold.
inline std::optional<Split> best_split(std::span<const int> node_rows, const Dataset& data,
                                       const Eigen::MatrixXd& embedded, const ForestConfig& config, Rng& rng,
                                       std::span<const std::uint64_t> row_keys = {}) {
  const int m = static_cast<int>(node_rows.size());
  if (m < 2) return std::nullopt;
  const int p = data.num_covariates();
  const int dims = static_cast<int>(embedded.rows());
  const double features = static_cast<double>(dims / 2);
  const SplitMode mode = config.split_mode;
  const bool causal = mode == SplitMode::CausalWeightedMmd;
  const int kappa = config.build_floor();
  const double min_child = config.alpha_regularity * m;

  std::vector<int> candidates(static_cast<std::size_t>(p));
  std::iota(candidates.begin(), candidates.end(), 0);
  const int mtry = config.effective_mtry(p);
  for (int k = 0; k < mtry; ++k) {
    std::uniform_int_distribution<int> pick(k, p - 1);
    std::swap(candidates[static_cast<std::size_t>(k)], candidates[static_cast<std::size_t>(pick(rng))]);
  }
  candidates.resize(static_cast<std::size_t>(mtry));
  std::sort(candidates.begin(), candidates.end());

  std::vector<double> total(2 * static_cast<std::size_t>(dims), 0.0);
  int total_count[2] = {0, 0};
  for (int r : node_rows) {
    const int a = detail::arm_of(data, r, mode);
    ++total_count[a];
    const double* e = embedded.col(r).data();
    double* t = total.data() + a * dims;
    for (int k = 0; k < dims; ++k) t[k] += e[k];
  }
  if (causal && (total_count[0] < 2 * kappa || total_count[1] < 2 * kappa)) return std::nullopt;
  if (!causal && total_count[0] < 2 * kappa) return std::nullopt;

  std::optional<Split> best;
  std::vector<int> order(node_rows.begin(), node_rows.end());
  std::vector<double> left(2 * static_cast<std::size_t>(dims));

  for (int feature : candidates) {
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      const double xa = data.X(a, feature), xb = data.X(b, feature);
      if (xa != xb) return xa < xb;
      const auto ka = detail::key_of(row_keys, a), kb = detail::key_of(row_keys, b);
      return ka != kb ? ka < kb : a < b;
    });
    std::fill(left.begin(), left.end(), 0.0);
    int left_count[2] = {0, 0};

    for (int k = 0; k + 1 < m; ++k) {
      const int r = order[static_cast<std::size_t>(k)];
      const int a = detail::arm_of(data, r, mode);
      ++left_count[a];
      {
        const double* e = embedded.col(r).data();
        double* l = left.data() + a * dims;
        for (int q = 0; q < dims; ++q) l[q] += e[q];
      }
      const double x_here = data.X(r, feature);
      const double x_next = data.X(order[static_cast<std::size_t>(k + 1)], feature);
      if (x_here == x_next) continue;

      const int nl = k + 1;
      const int nr = m - nl;
      if (nl < min_child || nr < min_child) continue;
      const int right_count[2] = {total_count[0] - left_count[0], total_count[1] - left_count[1]};
      if (causal) {
        if (left_count[0] < kappa || left_count[1] < kappa || right_count[0] < kappa || right_count[1] < kappa)
          continue;
      } else if (nl < kappa || nr < kappa) {
        continue;
      }

      double sq = 0.0;
      if (causal) {
        const double l1 = 1.0 / left_count[1], l0 = 1.0 / left_count[0];
        const double r1 = 1.0 / right_count[1], r0 = 1.0 / right_count[0];
        const double* L0 = left.data();
        const double* L1 = left.data() + dims;
        const double* T0 = total.data();
        const double* T1 = total.data() + dims;
        for (int q = 0; q < dims; ++q) {
          const double d = (L1[q] * l1 - L0[q] * l0) - ((T1[q] - L1[q]) * r1 - (T0[q] - L0[q]) * r0);
          sq += d * d;
        }
      } else {
        const double il = 1.0 / nl, ir = 1.0 / nr;
        for (int q = 0; q < dims; ++q) {
          const double d = left[static_cast<std::size_t>(q)] * il - (total[static_cast<std::size_t>(q)] - left[static_cast<std::size_t>(q)]) * ir;
          sq += d * d;
        }
      }
      const double score = static_cast<double>(nl) * nr / (static_cast<double>(m) * m) * sq / features;
      if (!best || score > best->score) {
        double threshold = 0.5 * (x_here + x_next);
        if (!(threshold > x_here)) threshold = x_next;
        best = Split{feature, threshold, score};
      }
    }
  }
  return best;
}

namespace detail {

// Collapses any parent with a child leaf that lacks kappa populate rows per arm.
inline void prune_underpopulated(std::vector<TreeNode>& nodes, int id, const Dataset& data, SplitMode mode,
                                 int kappa) {
  TreeNode& nd = nodes[static_cast<std::size_t>(id)];
  if (nd.is_leaf()) return;
  prune_underpopulated(nodes, nd.left, data, mode, kappa);
  prune_underpopulated(nodes, nd.right, data, mode, kappa);
  TreeNode& l = nodes[static_cast<std::size_t>(nd.left)];
  TreeNode& r = nodes[static_cast<std::size_t>(nd.right)];
  const bool starved = (l.is_leaf() && !leaf_populated(l.members, data, mode, kappa)) ||
                       (r.is_leaf() && !leaf_populated(r.members, data, mode, kappa));
  if (!starved) return;
  // Gather every populate row of the subtree into the collapsed parent.
  std::vector<int> members;
  std::vector<int> stack{nd.left, nd.right};
  while (!stack.empty()) {
    TreeNode& c = nodes[static_cast<std::size_t>(stack.back())];
    stack.pop_back();
    if (c.is_leaf()) {
      members.insert(members.end(), c.members.begin(), c.members.end());
    } else {
      stack.push_back(c.left);
      stack.push_back(c.right);
    }
  }
  std::sort(members.begin(), members.end());
  nd.feature = -1;
  nd.threshold = 0.0;
  nd.left = nd.right = -1;
  nd.members = std::move(members);
}

// Renumbers reachable nodes in preorder, dropping orphans left by pruning.
inline std::vector<TreeNode> compact(std::vector<TreeNode>& nodes) {
  std::vector<TreeNode> out;
  out.reserve(nodes.size());
  struct Frame {
    int old_id;
    int parent;
    bool is_left;
  };
  std::vector<Frame> stack{{0, -1, false}};
  while (!stack.empty()) {
    const Frame f = stack.back();
    stack.pop_back();
    const int new_id = static_cast<int>(out.size());
    out.push_back(std::move(nodes[static_cast<std::size_t>(f.old_id)]));
    if (f.parent >= 0) (f.is_left ? out[static_cast<std::size_t>(f.parent)].left : out[static_cast<std::size_t>(f.parent)].right) = new_id;
    const TreeNode& nd = out.back();
    if (!nd.is_leaf()) {
      stack.push_back({nd.right, new_id, false});
      stack.push_back({nd.left, new_id, true});
    }
  }
  return out;
}

}  // namespace detail

// Splits a subsample into build and populate halves, stratified by arm so
// both halves carry at least kappa rows of each arm.
inline std::pair<std::vector<int>, std::vector<int>> honest_partition(std::span<const int> subsample,
                                                                      const Dataset& data,
                                                                      std::span<const std::uint64_t> row_keys,
                                                                      const ForestConfig& config,
                                                                      std::uint64_t tree_seed) {
  const SplitMode mode = config.split_mode;
  const int kappa = config.populate_floor();
  std::vector<int> arms[2];
  for (int r : subsample) arms[detail::arm_of(data, r, mode)].push_back(r);

  std::vector<int> build, populate;
  const int arm_count = mode == SplitMode::CausalWeightedMmd ? 2 : 1;
  for (int a = 0; a < arm_count; ++a) {
    auto& rows = arms[a];
    const int c = static_cast<int>(rows.size());
    if (c < 2 * kappa) throw InsufficientData("tree subsample holds fewer than 2*kappa rows of an arm");
    std::vector<std::pair<std::uint64_t, int>> keyed;
    keyed.reserve(rows.size());
    for (int r : rows) keyed.emplace_back(mix_seed(tree_seed ^ mix_seed(detail::key_of(row_keys, r))), r);
    std::sort(keyed.begin(), keyed.end());
    const int n_build = std::clamp(static_cast<int>(std::lround(config.honesty_fraction * c)), kappa, c - kappa);
    for (int k = 0; k < c; ++k) (k < n_build ? build : populate).push_back(keyed[static_cast<std::size_t>(k)].second);
  }
  std::sort(build.begin(), build.end());
  std::sort(populate.begin(), populate.end());
  return {std::move(build), std::move(populate)};
}

// Grows one honest tree on `subsample`.
//
// The build half chooses splits; a node becomes a leaf when best_split finds
// no admissible candidate. The populate half is then routed to the leaves and
// parents of leaves lacking kappa populate rows per arm are collapsed.
inline Tree build_tree(std::span<const int> subsample, const Dataset& data, const ForestConfig& config,
                       const KernelSpec& kernel, std::uint64_t tree_seed,
                       std::span<const std::uint64_t> row_keys = {}) {
  Rng rng(tree_seed);
  Tree tree;
  tree.mode = config.split_mode;
  auto [build, populate] = honest_partition(subsample, data, row_keys, config, mix_seed(tree_seed));
  tree.build_rows = std::move(build);
  tree.populate_rows = std::move(populate);

  const FourierFeatures ff = sample_fourier_features(kernel, config.fourier_features, rng);
  Eigen::MatrixXd embedded(2 * ff.count(), data.size());
  for (int r : tree.build_rows) fourier_embed_into(data.Y.row(r).transpose(), ff, embedded.col(r).data());

  std::vector<std::vector<int>> node_rows;
  tree.nodes.emplace_back();
  node_rows.push_back(tree.build_rows);
  std::vector<int> pending{0};
  while (!pending.empty()) {
    const int id = pending.back();
    pending.pop_back();
    std::vector<int> rows = std::move(node_rows[static_cast<std::size_t>(id)]);
    tree.nodes[static_cast<std::size_t>(id)].build_count = static_cast<int>(rows.size());
    const auto split = best_split(rows, data, embedded, config, rng, row_keys);
    if (!split) continue;

    std::vector<int> left_rows, right_rows;
    for (int r : rows) (data.X(r, split->feature) < split->threshold ? left_rows : right_rows).push_back(r);
    const int left_id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    node_rows.push_back(std::move(left_rows));
    node_rows.push_back(std::move(right_rows));
    TreeNode& nd = tree.nodes[static_cast<std::size_t>(id)];
    nd.feature = split->feature;
    nd.threshold = split->threshold;
    nd.left = left_id;
    nd.right = left_id + 1;
    pending.push_back(left_id + 1);
    pending.push_back(left_id);
  }

  for (int r : tree.populate_rows) {
    const int leaf = tree.leaf_index(data.X.row(r));
    tree.nodes[static_cast<std::size_t>(leaf)].members.push_back(r);
  }
  detail::prune_underpopulated(tree.nodes, 0, data, tree.mode, config.populate_floor());
  if (!detail::leaf_populated(tree.nodes[0].is_leaf() ? tree.nodes[0].members : tree.populate_rows, data, tree.mode,
                              config.populate_floor()))
    throw InsufficientData("populate sample cannot satisfy kappa per arm at the root");
  tree.nodes = detail::compact(tree.nodes);
  return tree;
}

// Adds scale * (per-tree weight) for the leaf of x into `out`.
template <typename V>
void accumulate_tree_weights(const Tree& tree, const V& x, std::span<const std::uint8_t> W, double scale,
                             Eigen::VectorXd& out) {
  const auto& members = tree.nodes[static_cast<std::size_t>(tree.leaf_index(x))].members;
  if (tree.mode == SplitMode::PlainMmd) {
    const double w = scale / static_cast<double>(members.size());
    for (int i : members) out[i] += w;
    return;
  }
  int treated = 0;
  for (int i : members) treated += W[static_cast<std::size_t>(i)];
  const double w1 = scale / treated;
  const double w0 = -scale / (static_cast<int>(members.size()) - treated);
  for (int i : members) out[i] += W[static_cast<std::size_t>(i)] ? w1 : w0;
}

// Signed leaf weights: +1/#treated on treated members and -1/#control on
// control members; 1/#members in plain mode.
template <typename V>
TreeWeights tree_weights(const Tree& tree, const V& x, const Dataset& data) {
  const auto& members = tree.nodes[static_cast<std::size_t>(tree.leaf_index(x))].members;
  TreeWeights out;
  out.reserve(members.size());
  if (tree.mode == SplitMode::PlainMmd) {
    for (int i : members) out.push_back({i, 1.0 / static_cast<double>(members.size())});
    return out;
  }
  int treated = 0;
  for (int i : members) treated += data.W[static_cast<std::size_t>(i)];
  const int control = static_cast<int>(members.size()) - treated;
  for (int i : members)
    out.push_back({i, data.W[static_cast<std::size_t>(i)] ? 1.0 / treated : -1.0 / control});
  return out;
}

}  // namespace causal_drf
