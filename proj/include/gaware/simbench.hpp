#pragma once

#include "gaware/estimate_builder.hpp"
#include "gaware/tree_search.hpp"

#include <optional>

namespace gaware {

/// Contaminated data-generating process: archetype regions with fixed
/// effects along x1, plus a small basin (an x1 stripe around the archetype
/// boundary crossed with high x2) whose effects are heavy-tailed draws.
struct SimConfig {
  int num_types = 2000;
  double basin_fraction = 0.04;
  std::vector<double> archetype_means = {0.2, 1.0};
  double cauchy_scale = 1.0;
  std::optional<double> cauchy_center;  // default: the region's archetype mean
  double outcome_noise_sd = 1.0;
  double treat_prob = 0.5;
  int units_per_type = 4;
  int replications = 50;
  std::uint64_t seed = 0;
};

void validate_sim_config(const SimConfig& config);

struct DgpDraw {
  RawStudy study;
  std::vector<Vector> type_covariates;  // aligned with type index
  std::vector<double> truth;            // effect per type
  std::vector<char> in_basin;
  long clip_events = 0;  // heavy-tail draws clipped at +/-1e6
};

DgpDraw generate_dgp(const SimConfig& config, std::uint64_t rep_seed);

/// Per-row truth and basin membership for a table built from the draw's
/// study (rows matched by exact covariates).
struct AlignedTruth {
  std::vector<double> truth;
  std::vector<char> in_basin;
};
AlignedTruth align_truth(const DgpDraw& draw, const EstimateTable& table);

/// Posterior-mean shrinkage of each type's estimate toward its leaf mean
/// under Gaussian noise with either the estimated variance or a supplied
/// (known) one.
std::map<std::string, Vector> shrinkage_baseline(
    const EstimateTable& table, const TreeModel& plain_tree,
    const std::optional<std::map<std::string, double>>& known_variance = std::nullopt);

/// Mean squared prediction error over the types of the true generalizable
/// set for which the method predicts; NaN when it predicts on none of them.
double generalizable_set_error(const std::vector<double>& predictions,
                               const std::vector<char>& predicted,
                               const AlignedTruth& aligned);
/// Same quantity via one vectorized pass (used as an independent check).
double generalizable_set_error_vectorized(const std::vector<double>& predictions,
                                          const std::vector<char>& predicted,
                                          const AlignedTruth& aligned);

struct BenchMethods {
  std::vector<double> gaware_sigma2_grid = {0.1, 0.5, 1.0, 1.5, 2.0};
  bool plain_tree = true;       // the no-abstention tree (sigma2 = 1e9)
  bool eb_known = true;
  bool eb_estimated = true;
};

struct BenchRow {
  std::string method;
  double scale = 0.0;
  int rep = 0;
  double gen_error = 0.0;
  double basin_recall = 0.0;
  double basin_precision = 1.0;
  double basin_share = 0.0;
  double runtime_ms = 0.0;
  bool failed = false;
};

struct BenchSummary {
  std::string method;
  double scale = 0.0;
  double median_gen_error = 0.0;
  double median_recall = 0.0;
  double median_precision = 0.0;
  double median_share = 0.0;
  int failures = 0;
};

struct BenchReport {
  std::vector<BenchRow> rows;
  std::vector<BenchSummary> summaries;
  long clip_events = 0;
};

BenchReport run_benchmark(const SimConfig& config, const std::vector<double>& scales,
                          const BenchMethods& methods, const SearchConfig& tree_config,
                          int threads = 1);

double median(std::vector<double> values);

}  // namespace gaware
