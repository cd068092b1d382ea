#pragma once

#include "gaware/estimate_table.hpp"
#include "gaware/regression.hpp"

#include <cstdint>

namespace gaware {

/// How raw units are grouped into observation types.
enum class TypeKeying { CovariatesAndEnvironment, CovariatesOnly };

/// Per-type means of inverse-propensity-weighted pseudo-outcomes, with the
/// within-type variance estimator when `per_type_variance` is set (each type
/// then needs at least two units). Weights are type shares of the sample.
EstimateTable ipw_pseudo_outcomes(const RawStudy& study,
                                  TypeKeying keying = TypeKeying::CovariatesAndEnvironment,
                                  bool per_type_variance = true);

/// Doubly robust pseudo-outcomes with conditional means cross-fitted within
/// each environment (a unit's predictions never come from models trained on
/// its own fold); aggregation as in ipw_pseudo_outcomes.
EstimateTable dr_pseudo_outcomes(const RawStudy& study, const RegressionOracle& oracle, int folds,
                                 std::uint64_t seed,
                                 TypeKeying keying = TypeKeying::CovariatesAndEnvironment,
                                 bool per_type_variance = true);

/// Greedy nearest-neighbour grouping without replacement within each
/// environment (groups of match_size+1, zero-distance ties all included);
/// one row per group with median covariates and the group variance of the
/// doubly robust pseudo-outcomes.
EstimateTable matched_variance_table(const RawStudy& study, const RegressionOracle& oracle,
                                     int folds, int match_size, std::uint64_t seed);

/// Squared cross-fitted residual as the per-unit variance, optionally
/// smoothed by regressing it on covariates (negative fits floored at zero
/// and counted in provenance).
EstimateTable parametric_variance_table(const RawStudy& study, const RegressionOracle& oracle,
                                        int folds, bool model_variance, std::uint64_t seed);

enum class EstimatorKind { Ipw, DoublyRobust, Matched, Parametric };

struct EstimatorSpec {
  EstimatorKind kind = EstimatorKind::Ipw;
  RegressionOracle oracle;  // required for dr / matched / parametric
  int folds = 2;
  int match_size = 3;
  bool model_variance = false;
  bool per_type_variance = true;
  TypeKeying keying = TypeKeying::CovariatesAndEnvironment;
  std::uint64_t seed = 0;
};

EstimateTable build_estimates(const RawStudy& study, const EstimatorSpec& spec);

/// Two tables built from disjoint unit halves of the same types, sharing ids
/// and full-sample weights.
struct SplitPair {
  EstimateTable main;
  EstimateTable holdout;
  std::vector<std::string> excluded_types;  // fewer than four units
};

/// Randomly halves the units of every type (odd counts leave the extra unit
/// in the main half) and runs the chosen estimator on each half. Matched
/// estimation is rejected: its rows are groups, which cannot share ids
/// across halves.
SplitPair split_for_inference(const RawStudy& study, const EstimatorSpec& spec,
                              std::uint64_t seed);

}  // namespace gaware
