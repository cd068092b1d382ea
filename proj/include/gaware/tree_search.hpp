#pragma once

#include "gaware/reward.hpp"
#include "gaware/tree_model.hpp"

#include <memory>
#include <vector>

namespace gaware {

enum class SplitRule { EqualSpaced, Quantile };

struct SearchConfig {
  int depth = 2;        // L
  int splits = 5;       // S candidate values per variable per node
  int min_leaf = 1;     // archetype leaves need strictly more types than this
  int group_count = 4;  // G; at most G-1 archetype leaves survive
  SigmaCost sigma2;
  SplitRule split_rule = SplitRule::EqualSpaced;
};

void validate_search_config(const SearchConfig& config);

struct SearchStats {
  long long candidate_evals = 0;  // split candidates formed across all nodes
};

/// Search-time tree: leaves keep their member rows and cached losses so the
/// labeling pass can reuse them.
struct SearchNode {
  bool is_leaf = false;
  // branch
  int split_var = 0;
  double split_value = 0.0;
  std::shared_ptr<const SearchNode> left;
  std::shared_ptr<const SearchNode> right;
  // leaf
  std::vector<int> rows;
  double delta = 0.0;        // debiased loss if pooled as one archetype
  double ignorance_cost = 0.0;
  int count = 0;
  bool archetype = false;    // decision taken during the search
  bool pinned_ignorance = false;  // no feasible split existed for this scope
};

struct HelperResult {
  double loss = 0.0;  // sum over leaves of the cheaper of the two labelings
  std::shared_ptr<const SearchNode> root;
  SearchStats stats;
  bool infeasible_scope = false;  // some node had candidates but all were infeasible
};

/// Exact recursive optimizer: every leaf independently chooses archetype or
/// ignorance. `scope` lists table row indices (defaults to the whole table).
HelperResult helper_tree(const EstimateTable& table, const SearchConfig& config,
                         const std::vector<int>& scope);
HelperResult helper_tree(const EstimateTable& table, const SearchConfig& config);

/// Preorder (variable, value) pairs of the chosen splits.
std::vector<std::pair<int, double>> split_list(const HelperResult& result);

struct FitResult {
  TreeModel tree;
  RewardBreakdown breakdown;
  double epsilon = 0.0;      // certified optimization error, zero when G >= 2^L + 1
  double helper_loss = 0.0;  // lower bound the certificate is measured against
  SearchStats stats;
};

/// Greedy fit: runs the helper search, relabels leaves, keeps the G-1 best
/// archetype leaves when over budget, and certifies the optimization error.
FitResult fit_gaware_tree(const EstimateTable& table, const SearchConfig& config);

/// Exhaustive optimum over all split trees (scope-dependent candidate values,
/// identical tie-breaking) and all leaf labelings with feasible archetype
/// counts and at most G-1 archetypes. Refuses instances beyond the
/// enumeration guard (S*r)^(2^L - 1) * 2^(2^L) <= 1e7.
FitResult brute_force_fit(const EstimateTable& table, const SearchConfig& config);

/// Convenience fitter for sigma_frontier.
PartitionFitter gaware_fitter(const SearchConfig& base);
PartitionFitter brute_force_fitter(const SearchConfig& base);

}  // namespace gaware
