#pragma once

#include "gaware/tree_search.hpp"

#include <cstdint>
#include <optional>

namespace gaware {

struct ForestTree {
  TreeModel tree;
  std::vector<int> variables;  // covariate subset the tree was allowed to split on
  std::uint64_t seed = 0;      // bootstrap stream
};

struct ForestModel {
  std::vector<ForestTree> trees;
  int variables_per_tree = 1;  // m < r
};

struct ForestOptions {
  int tree_count = 100;        // M
  int variables_per_tree = 1;  // m
  std::uint64_t seed = 0;
  int threads = 1;
  bool bootstrap = true;  // diagnostic mode disables resampling
};

/// Bagged trees: each draws a bootstrap resample of the rows (weights
/// renormalized, duplicates merged by multiplicity) and a random variable
/// subset, then fits the greedy tree. Deterministic given the seed.
ForestModel fit_forest(const EstimateTable& table, const SearchConfig& config,
                       const ForestOptions& options);

struct TypeScore {
  std::string type_id;
  double score = 0.0;                 // share of trees that predict
  std::optional<Vector> prediction;   // absent when every tree abstains
};

/// Per-type generalizability scores and averaged predictions of the
/// predicting trees.
std::vector<TypeScore> predict_with_scores(const ForestModel& model, const EstimateTable& table);

void save_forest(const ForestModel& model, const std::string& path);
ForestModel load_forest(const std::string& path);

}  // namespace gaware
