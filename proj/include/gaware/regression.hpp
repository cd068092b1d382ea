#pragma once

#include "gaware/estimate_table.hpp"

#include <cstdint>
#include <functional>

namespace gaware {

/// A fitted regression: predicts a scalar response from covariates.
struct OracleFit {
  std::function<double(const Vector&)> predict;
  bool degenerate = false;  // fell back to a constant
};

/// Pluggable regression procedure mapping training data to a predictor.
/// Implementations must be deterministic given (X, y, seed).
using RegressionOracle =
    std::function<OracleFit(const Matrix& X, const Vector& y, std::uint64_t seed)>;

/// Ridge regression on standardized covariates, penalty chosen from a fixed
/// grid by k-fold cross-validation.
RegressionOracle ridge_cv_oracle(int cv_folds = 5);
RegressionOracle ridge_cv_oracle(std::vector<double> penalty_grid, int cv_folds);

/// Mean of the k nearest training responses (Euclidean distance).
RegressionOracle knn_oracle(int k);

/// Constant fit at the training mean.
RegressionOracle constant_oracle();

/// Always predicts zero; reduces doubly robust pseudo-outcomes to plain
/// inverse-propensity weighting.
RegressionOracle zero_oracle();

}  // namespace gaware
