#pragma once

#include "gaware/estimate_table.hpp"

#include <string>
#include <vector>

namespace gaware {

/// Child reference in a tree: non-negative values index branches,
/// negative values index leaves via leaf = -ref - 1.
using NodeRef = int;

inline NodeRef leaf_ref(int leaf_index) { return -leaf_index - 1; }
inline bool is_leaf_ref(NodeRef ref) { return ref < 0; }
inline int leaf_index(NodeRef ref) { return -ref - 1; }

struct TreeBranch {
  int split_var = 0;     // covariate index
  double split_value = 0.0;
  NodeRef left = 0;      // types with x[split_var] <= split_value
  NodeRef right = 0;
};

struct TreeLeaf {
  bool ignorance = true;
  int label = 1;             // 1 for ignorance, 2..G for archetypes
  Vector prediction;         // per outcome; empty for ignorance leaves
  bool infeasible_scope = false;  // pinned to ignorance: no feasible split existed
};

struct TreeMeta {
  int version = 1;
  double sigma2 = 1.0;
  int groups = 2;
  int splits = 1;
  int min_leaf = 1;
  int depth = 1;
  double objective = 0.0;    // fitted reward
  double epsilon = 0.0;      // certified optimization error
  std::string split_rule = "equal";
  std::vector<std::string> outcome_names;
  std::vector<std::string> covariate_names;
};

/// A fitted split tree. Branches are stored in preorder with the root at
/// index 0 when any branch exists; a branchless tree is the single leaf 0.
struct TreeModel {
  TreeMeta meta;
  std::vector<TreeBranch> nodes;
  std::vector<TreeLeaf> leaves;

  NodeRef root() const { return nodes.empty() ? leaf_ref(0) : 0; }

  /// Leaf index reached by a covariate vector.
  int leaf_for(const Vector& covariates) const;

  int archetype_leaf_count() const;
};

/// Structural invariants: reachability, depth bound, distinct archetype
/// labels in 2..G with at most G-1 of them, predictions present exactly on
/// archetype leaves. Throws ValidationError.
void validate_tree(const TreeModel& model);

/// Partition induced by the tree over a table's types.
Partition partition_from_tree(const TreeModel& model, const EstimateTable& table);

}  // namespace gaware
