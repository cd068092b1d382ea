#include "gaware/tree_model.hpp"

#include <cmath>
#include <functional>
#include <set>

namespace gaware {

int TreeModel::leaf_for(const Vector& covariates) const {
  NodeRef ref = root();
  while (!is_leaf_ref(ref)) {
    const TreeBranch& b = nodes[static_cast<std::size_t>(ref)];
    if (b.split_var < 0 || b.split_var >= covariates.size())
      throw ValidationError("tree splits on covariate " + std::to_string(b.split_var) +
                            " but vector has " + std::to_string(covariates.size()));
    ref = covariates[b.split_var] <= b.split_value ? b.left : b.right;
  }
  return leaf_index(ref);
}

int TreeModel::archetype_leaf_count() const {
  int count = 0;
  for (const auto& leaf : leaves)
    if (!leaf.ignorance) ++count;
  return count;
}

void validate_tree(const TreeModel& model) {
  if (model.leaves.empty()) throw ValidationError("tree has no leaves");
  const int n_nodes = static_cast<int>(model.nodes.size());
  const int n_leaves = static_cast<int>(model.leaves.size());

  std::vector<int> node_seen(static_cast<std::size_t>(n_nodes), 0);
  std::vector<int> leaf_seen(static_cast<std::size_t>(n_leaves), 0);

  std::function<int(NodeRef)> walk = [&](NodeRef ref) -> int {
    if (is_leaf_ref(ref)) {
      const int li = leaf_index(ref);
      if (li < 0 || li >= n_leaves) throw ValidationError("leaf reference out of range");
      if (leaf_seen[static_cast<std::size_t>(li)]++)
        throw ValidationError("leaf " + std::to_string(li) + " referenced twice");
      return 0;
    }
    if (ref >= n_nodes) throw ValidationError("branch reference out of range");
    if (node_seen[static_cast<std::size_t>(ref)]++)
      throw ValidationError("branch " + std::to_string(ref) + " referenced twice");
    const TreeBranch& b = model.nodes[static_cast<std::size_t>(ref)];
    if (!std::isfinite(b.split_value)) throw ValidationError("non-finite split value");
    return 1 + std::max(walk(b.left), walk(b.right));
  };
  const int depth = walk(model.root());

  for (int i = 0; i < n_nodes; ++i)
    if (!node_seen[static_cast<std::size_t>(i)])
      throw ValidationError("branch " + std::to_string(i) + " unreachable");
  for (int i = 0; i < n_leaves; ++i)
    if (!leaf_seen[static_cast<std::size_t>(i)])
      throw ValidationError("leaf " + std::to_string(i) + " unreachable");

  if (depth > model.meta.depth)
    throw ValidationError("tree depth " + std::to_string(depth) + " exceeds declared " +
                          std::to_string(model.meta.depth));

  std::set<int> labels;
  for (const auto& leaf : model.leaves) {
    if (leaf.ignorance) {
      if (leaf.label != 1) throw ValidationError("ignorance leaf must carry label 1");
      if (leaf.prediction.size() != 0)
        throw ValidationError("ignorance leaf must not carry predictions");
    } else {
      if (leaf.label < 2 || leaf.label > model.meta.groups)
        throw ValidationError("archetype label " + std::to_string(leaf.label) +
                              " outside 2.." + std::to_string(model.meta.groups));
      if (!labels.insert(leaf.label).second)
        throw ValidationError("duplicate archetype label " + std::to_string(leaf.label));
      if (leaf.prediction.size() == 0)
        throw ValidationError("archetype leaf missing predictions");
      for (Eigen::Index i = 0; i < leaf.prediction.size(); ++i)
        if (!std::isfinite(leaf.prediction[i]))
          throw ValidationError("non-finite leaf prediction");
    }
  }
  if (static_cast<int>(labels.size()) > model.meta.groups - 1)
    throw ValidationError("more than G-1 archetype leaves");
}

Partition partition_from_tree(const TreeModel& model, const EstimateTable& table) {
  Partition part;
  part.group_count = model.meta.groups;
  for (const auto& row : table.rows) {
    const TreeLeaf& leaf = model.leaves[static_cast<std::size_t>(model.leaf_for(row.covariates))];
    part.labels[row.type_id] = leaf.ignorance ? 1 : leaf.label;
  }
  return part;
}

}  // namespace gaware
