#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "causal_drf/error.hpp"

namespace causal_drf {

// Observed sample (Y_i, W_i, X_i), i = 0..n-1.
struct Dataset {
  Eigen::MatrixXd X;               // n x p covariates
  std::vector<std::uint8_t> W;     // treatment indicator in {0, 1}
  Eigen::MatrixXd Y;               // n x d outcomes

  Eigen::Index size() const noexcept { return X.rows(); }
  int num_covariates() const noexcept { return static_cast<int>(X.cols()); }
  int outcome_dim() const noexcept { return static_cast<int>(Y.cols()); }

  std::size_t count_arm(int arm) const noexcept {
    std::size_t c = 0;
    for (auto w : W) c += (w == arm);
    return c;
  }

  // Structural checks: matching sizes, binary W, finite entries.
  void validate() const {
    const auto n = X.rows();
    if (n < 1) throw InsufficientData("dataset is empty");
    if (Y.rows() != n || static_cast<Eigen::Index>(W.size()) != n)
      throw DimensionMismatch("X, W and Y must have the same number of rows");
    if (X.cols() < 1) throw DimensionMismatch("at least one covariate is required");
    if (Y.cols() < 1) throw DimensionMismatch("at least one outcome column is required");
    for (std::size_t i = 0; i < W.size(); ++i)
      if (W[i] > 1) throw NonBinaryTreatment(i, std::to_string(int(W[i])));
    if (!X.allFinite() || !Y.allFinite()) throw InvalidConfig("dataset contains non-finite values");
  }

  // Rows selected by index, in the given order.
  Dataset subset(const std::vector<int>& rows) const {
    Dataset out;
    out.X.resize(static_cast<Eigen::Index>(rows.size()), X.cols());
    out.Y.resize(static_cast<Eigen::Index>(rows.size()), Y.cols());
    out.W.resize(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      out.X.row(static_cast<Eigen::Index>(r)) = X.row(rows[r]);
      out.Y.row(static_cast<Eigen::Index>(r)) = Y.row(rows[r]);
      out.W[r] = W[static_cast<std::size_t>(rows[r])];
    }
    return out;
  }
};

}  // namespace causal_drf
