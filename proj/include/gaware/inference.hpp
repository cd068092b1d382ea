#pragma once

#include "gaware/estimate_builder.hpp"
#include "gaware/tree_search.hpp"

namespace gaware {

struct TestReport {
  std::string candidate_id;
  double statistic = 0.0;       // reward gap of the out-of-sample partition
  double variance = 0.0;        // upper-bound variance estimate
  double critical_value = 0.0;  // Gaussian quantile times the estimate's root
  double gamma_star = 0.0;      // per-candidate level after the correction
  bool retained = true;
  bool degenerate = false;      // variance below threshold: no rejection
};

struct OutOfSampleFit {
  Partition partition;
  FitResult fit;
  bool non_independent = false;  // holdout estimates coincide with the main half
};

/// Fits the partition on the holdout half only. Flags the misuse of passing
/// identical halves.
OutOfSampleFit fit_out_of_sample(const SplitPair& pair, const SearchConfig& config);

/// Reward difference on the main half: candidate versus the reference
/// partition, both with main-half group means.
double test_statistic(const EstimateTable& main, const Partition& candidate,
                      const Partition& reference, const SigmaCost& sigma2);

/// Sample-analog upper bound for the variance of the scaled statistic.
/// Per-group centering gives the tighter (never larger) variant.
double variance_bound(const EstimateTable& main, const Partition& candidate,
                      const Partition& reference, bool per_group_centering = false);

struct PruneResult {
  std::vector<TestReport> reports;
  std::vector<std::size_t> retained;  // indices into the candidate list
  Partition reference;                // fitted on the holdout half
};

/// Tests every candidate at level gamma / #candidates against the
/// holdout-fitted partition; candidates with degenerate variance are
/// retained. Candidate ids default to their position.
PruneResult prune_partition_set(const SplitPair& pair, const std::vector<Partition>& candidates,
                                double gamma, const SearchConfig& config,
                                bool per_group_centering = false);

}  // namespace gaware
