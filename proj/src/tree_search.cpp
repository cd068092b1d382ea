#include "gaware/tree_search.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

namespace gaware {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Ctx {
  const EstimateTable& table;
  const SearchConfig& config;
  SearchStats stats;
  bool infeasible_scope = false;
};

std::shared_ptr<SearchNode> make_leaf(Ctx& ctx, std::vector<int> rows, bool pinned) {
  auto leaf = std::make_shared<SearchNode>();
  leaf->is_leaf = true;
  leaf->count = static_cast<int>(rows.size());
  const int q = ctx.table.num_outcomes();
  Vector sum = Vector::Zero(q);
  double mass = 0.0;
  for (int i : rows) {
    const TypeRow& row = ctx.table.row(i);
    sum += row.weight * row.phi_hat;
    mass += row.weight;
    leaf->ignorance_cost += ctx.config.sigma2.cost(row.type_id) * row.weight;
  }
  if (mass > 0.0) {
    const Vector mean = sum / mass;
    for (int i : rows) {
      const TypeRow& row = ctx.table.row(i);
      leaf->delta += row.weight * ((mean - row.phi_hat).squaredNorm() - row.eta2_hat.sum());
    }
  }
  leaf->rows = std::move(rows);
  leaf->pinned_ignorance = pinned;
  leaf->archetype = !pinned && leaf->count > ctx.config.min_leaf &&
                    leaf->delta <= leaf->ignorance_cost;
  return leaf;
}

double leaf_cost(const SearchNode& leaf) {
  return leaf.archetype ? leaf.delta : leaf.ignorance_cost;
}

/// Candidate split values for one variable within a scope. Equal spacing
/// places S values strictly inside [min, max]; the quantile rule
/// interpolates order statistics (values equal to the maximum are dropped
/// since they would leave the right side empty).
std::vector<double> candidate_values(const Ctx& ctx, const std::vector<int>& scope, int var) {
  std::vector<double> values;
  values.reserve(scope.size());
  for (int i : scope) values.push_back(ctx.table.row(i).covariates[var]);
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) return {};

  const int s = ctx.config.splits;
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(s));
  if (ctx.config.split_rule == SplitRule::EqualSpaced) {
    for (int k = 1; k <= s; ++k) out.push_back(lo + k * (hi - lo) / (s + 1));
  } else {
    std::sort(values.begin(), values.end());
    const double m = static_cast<double>(values.size() - 1);
    for (int k = 1; k <= s; ++k) {
      const double pos = m * k / (s + 1);
      const auto base = static_cast<std::size_t>(pos);
      const double frac = pos - static_cast<double>(base);
      double t = values[base];
      if (frac > 0.0 && base + 1 < values.size())
        t += frac * (values[base + 1] - values[base]);
      if (t < hi) out.push_back(t);
    }
  }
  return out;
}

void split_scope(const Ctx& ctx, const std::vector<int>& scope, int var, double value,
                 std::vector<int>* left, std::vector<int>* right) {
  left->clear();
  right->clear();
  for (int i : scope)
    (ctx.table.row(i).covariates[var] <= value ? left : right)->push_back(i);
}

struct NodeResult {
  double loss = kInf;
  std::shared_ptr<const SearchNode> node;
};

NodeResult search(Ctx& ctx, const std::vector<int>& scope, int depth) {
  const int r = ctx.table.num_covariates();
  NodeResult best;
  bool any_candidate = false;
  std::vector<int> left, right;

  for (int var = 0; var < r; ++var) {
    const auto values = candidate_values(ctx, scope, var);
    for (double value : values) {
      any_candidate = true;
      ++ctx.stats.candidate_evals;
      split_scope(ctx, scope, var, value, &left, &right);
      if (left.empty() || right.empty()) continue;

      if (depth == 1) {
        // A side whose cheaper labeling is an archetype below the minimum
        // count invalidates the whole split.
        auto lhs = make_leaf(ctx, left, false);
        if (lhs->delta <= lhs->ignorance_cost && lhs->count <= ctx.config.min_leaf) continue;
        auto rhs = make_leaf(ctx, right, false);
        if (rhs->delta <= rhs->ignorance_cost && rhs->count <= ctx.config.min_leaf) continue;
        const double loss = leaf_cost(*lhs) + leaf_cost(*rhs);
        if (loss < best.loss) {
          auto branch = std::make_shared<SearchNode>();
          branch->split_var = var;
          branch->split_value = value;
          branch->left = std::move(lhs);
          branch->right = std::move(rhs);
          best = {loss, std::move(branch)};
        }
      } else {
        NodeResult lhs = search(ctx, left, depth - 1);
        NodeResult rhs = search(ctx, right, depth - 1);
        const double loss = lhs.loss + rhs.loss;
        if (loss < best.loss) {
          auto branch = std::make_shared<SearchNode>();
          branch->split_var = var;
          branch->split_value = value;
          branch->left = std::move(lhs.node);
          branch->right = std::move(rhs.node);
          best = {loss, std::move(branch)};
        }
      }
    }
  }

  if (best.node) return best;
  if (any_candidate) {
    // every split at this node was infeasible
    ctx.infeasible_scope = true;
    auto leaf = make_leaf(ctx, scope, true);
    return {leaf->ignorance_cost, std::move(leaf)};
  }
  auto leaf = make_leaf(ctx, scope, false);
  const double loss = leaf_cost(*leaf);
  return {loss, std::move(leaf)};
}

void collect_leaves(const SearchNode* node, std::vector<const SearchNode*>* leaves) {
  if (node->is_leaf) {
    leaves->push_back(node);
    return;
  }
  collect_leaves(node->left.get(), leaves);
  collect_leaves(node->right.get(), leaves);
}

/// Converts a search tree plus final per-leaf labels into a TreeModel.
TreeModel build_model(const EstimateTable& table, const SearchConfig& config,
                      const SearchNode* root, const std::vector<char>& leaf_is_archetype) {
  TreeModel model;
  model.meta.sigma2 = config.sigma2.is_scalar() ? config.sigma2.scalar : -1.0;
  model.meta.groups = config.group_count;
  model.meta.splits = config.splits;
  model.meta.min_leaf = config.min_leaf;
  model.meta.depth = config.depth;
  model.meta.split_rule = config.split_rule == SplitRule::EqualSpaced ? "equal" : "quantile";
  model.meta.outcome_names = table.outcome_names;
  model.meta.covariate_names = table.covariate_names;

  int next_label = 2;
  std::size_t leaf_at = 0;
  const int q = table.num_outcomes();

  std::function<NodeRef(const SearchNode*)> emit = [&](const SearchNode* node) -> NodeRef {
    if (!node->is_leaf) {
      const int idx = static_cast<int>(model.nodes.size());
      model.nodes.push_back({node->split_var, node->split_value, 0, 0});
      const NodeRef l = emit(node->left.get());
      model.nodes[static_cast<std::size_t>(idx)].left = l;
      const NodeRef r = emit(node->right.get());
      model.nodes[static_cast<std::size_t>(idx)].right = r;
      return idx;
    }
    TreeLeaf leaf;
    leaf.infeasible_scope = node->pinned_ignorance;
    if (leaf_is_archetype[leaf_at++]) {
      leaf.ignorance = false;
      leaf.label = next_label++;
      Vector sum = Vector::Zero(q);
      double mass = 0.0;
      for (int i : node->rows) {
        sum += table.row(i).weight * table.row(i).phi_hat;
        mass += table.row(i).weight;
      }
      leaf.prediction = sum / mass;
    } else {
      leaf.ignorance = true;
      leaf.label = 1;
    }
    model.leaves.push_back(std::move(leaf));
    return leaf_ref(static_cast<int>(model.leaves.size()) - 1);
  };
  emit(root);
  return model;
}

FitResult finish_fit(const EstimateTable& table, const SearchConfig& config,
                     const SearchNode* root, const std::vector<char>& labels, double fitted_loss,
                     double helper_loss, bool exact, SearchStats stats) {
  FitResult result;
  result.tree = build_model(table, config, root, labels);
  const Partition part = partition_from_tree(result.tree, table);
  result.breakdown =
      empirical_reward(table, part, RewardParams{config.sigma2, config.group_count});
  result.tree.meta.objective = result.breakdown.total;
  result.helper_loss = helper_loss;
  result.epsilon = exact ? 0.0 : std::max(0.0, fitted_loss - helper_loss);
  result.tree.meta.epsilon = result.epsilon;
  result.stats = stats;
  validate_tree(result.tree);
  return result;
}

}  // namespace

void validate_search_config(const SearchConfig& config) {
  if (config.depth < 1) throw ValidationError("search depth must be >= 1");
  if (config.splits < 1) throw ValidationError("splits per variable must be >= 1");
  if (config.min_leaf < 1) throw ValidationError("minimum leaf count must be >= 1");
  if (config.group_count < 2) throw ValidationError("group count must be >= 2");
  if (config.sigma2.is_scalar() &&
      (!(config.sigma2.scalar >= 0.0) || !std::isfinite(config.sigma2.scalar)))
    throw ValidationError("sigma2 must be finite and >= 0");
}

HelperResult helper_tree(const EstimateTable& table, const SearchConfig& config,
                         const std::vector<int>& scope) {
  validate_search_config(config);
  if (scope.empty()) throw ValidationError("helper_tree needs a nonempty scope");
  Ctx ctx{table, config};
  NodeResult res = search(ctx, scope, config.depth);
  return {res.loss, std::move(res.node), ctx.stats, ctx.infeasible_scope};
}

HelperResult helper_tree(const EstimateTable& table, const SearchConfig& config) {
  std::vector<int> scope(static_cast<std::size_t>(table.num_types()));
  for (int i = 0; i < table.num_types(); ++i) scope[static_cast<std::size_t>(i)] = i;
  return helper_tree(table, config, scope);
}

std::vector<std::pair<int, double>> split_list(const HelperResult& result) {
  std::vector<std::pair<int, double>> splits;
  std::function<void(const SearchNode*)> walk = [&](const SearchNode* node) {
    if (node->is_leaf) return;
    splits.emplace_back(node->split_var, node->split_value);
    walk(node->left.get());
    walk(node->right.get());
  };
  if (result.root) walk(result.root.get());
  return splits;
}

FitResult fit_gaware_tree(const EstimateTable& table, const SearchConfig& config) {
  validate_search_config(config);
  if (table.rows.empty()) throw ValidationError("cannot fit an empty table");

  Ctx ctx{table, config};
  std::vector<int> scope(static_cast<std::size_t>(table.num_types()));
  for (int i = 0; i < table.num_types(); ++i) scope[static_cast<std::size_t>(i)] = i;

  if (table.num_types() < config.min_leaf) {
    auto leaf = make_leaf(ctx, scope, false);
    std::vector<char> labels{static_cast<char>(leaf->archetype)};
    const double loss = leaf_cost(*leaf);
    return finish_fit(table, config, leaf.get(), labels, loss, loss, true, ctx.stats);
  }

  NodeResult helper = search(ctx, scope, config.depth);
  std::vector<const SearchNode*> leaves;
  collect_leaves(helper.node.get(), &leaves);

  // Leaf decisions first (identical to the search's own), then the budget:
  // keep the G-1 archetype leaves with the lowest net gain from predicting.
  std::vector<char> labels(leaves.size(), 0);
  std::vector<std::size_t> archetypes;
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    labels[i] = static_cast<char>(leaves[i]->archetype);
    if (labels[i]) archetypes.push_back(i);
  }
  const std::size_t budget = static_cast<std::size_t>(config.group_count - 1);
  bool truncated = false;
  if (archetypes.size() > budget) {
    truncated = true;
    std::stable_sort(archetypes.begin(), archetypes.end(), [&](std::size_t a, std::size_t b) {
      return leaves[a]->delta - leaves[a]->ignorance_cost <
             leaves[b]->delta - leaves[b]->ignorance_cost;
    });
    for (std::size_t i = budget; i < archetypes.size(); ++i) labels[archetypes[i]] = 0;
  }

  double fitted_loss = 0.0;
  for (std::size_t i = 0; i < leaves.size(); ++i)
    fitted_loss += labels[i] ? leaves[i]->delta : leaves[i]->ignorance_cost;

  return finish_fit(table, config, helper.node.get(), labels, fitted_loss, helper.loss,
                    !truncated, ctx.stats);
}

namespace {

struct BruteBest {
  double loss = kInf;
  std::shared_ptr<const SearchNode> root;
  std::vector<std::pair<int, int>> structure_key;  // preorder (var, candidate index)
  std::vector<char> labels;                        // preorder, 1 = archetype
  bool found = false;
};

struct BruteCtx {
  Ctx base;
  BruteBest best;
};

std::vector<std::shared_ptr<const SearchNode>> enumerate_structures(
    BruteCtx& ctx, const std::vector<int>& scope, int depth,
    std::vector<std::vector<std::pair<int, int>>>* keys) {
  std::vector<std::shared_ptr<const SearchNode>> out;
  keys->clear();
  const int r = ctx.base.table.num_covariates();
  std::vector<int> left, right;
  bool any = false;
  for (int var = 0; var < r; ++var) {
    const auto values = candidate_values(ctx.base, scope, var);
    for (std::size_t k = 0; k < values.size(); ++k) {
      any = true;
      split_scope(ctx.base, scope, var, values[k], &left, &right);
      if (left.empty() || right.empty()) continue;
      auto attach = [&](std::shared_ptr<const SearchNode> l,
                        std::vector<std::pair<int, int>> lkey,
                        std::shared_ptr<const SearchNode> rg,
                        std::vector<std::pair<int, int>> rkey) {
        auto branch = std::make_shared<SearchNode>();
        branch->split_var = var;
        branch->split_value = values[k];
        branch->left = std::move(l);
        branch->right = std::move(rg);
        out.push_back(std::move(branch));
        std::vector<std::pair<int, int>> key{{var, static_cast<int>(k)}};
        key.insert(key.end(), lkey.begin(), lkey.end());
        key.insert(key.end(), rkey.begin(), rkey.end());
        keys->push_back(std::move(key));
      };
      if (depth == 1) {
        attach(make_leaf(ctx.base, left, false), {}, make_leaf(ctx.base, right, false), {});
      } else {
        std::vector<std::vector<std::pair<int, int>>> lkeys, rkeys;
        auto lsub = enumerate_structures(ctx, left, depth - 1, &lkeys);
        auto rsub = enumerate_structures(ctx, right, depth - 1, &rkeys);
        for (std::size_t li = 0; li < lsub.size(); ++li)
          for (std::size_t ri = 0; ri < rsub.size(); ++ri)
            attach(lsub[li], lkeys[li], rsub[ri], rkeys[ri]);
      }
    }
  }
  if (!any) {
    out.push_back(make_leaf(ctx.base, scope, false));
    keys->push_back({});
  }
  return out;
}

void consider_labelings(BruteCtx& ctx, const std::shared_ptr<const SearchNode>& root,
                        const std::vector<std::pair<int, int>>& key) {
  std::vector<const SearchNode*> leaves;
  collect_leaves(root.get(), &leaves);
  const int p = static_cast<int>(leaves.size());
  const int budget = ctx.base.config.group_count - 1;

  for (unsigned mask = 0; mask < (1u << p); ++mask) {
    int archetype_count = 0;
    double loss = 0.0;
    bool feasible = true;
    for (int i = 0; i < p && feasible; ++i) {
      if (mask & (1u << i)) {
        if (leaves[static_cast<std::size_t>(i)]->count <= ctx.base.config.min_leaf) {
          feasible = false;
          break;
        }
        ++archetype_count;
        loss += leaves[static_cast<std::size_t>(i)]->delta;
      } else {
        loss += leaves[static_cast<std::size_t>(i)]->ignorance_cost;
      }
    }
    if (!feasible || archetype_count > budget) continue;

    std::vector<char> labels(static_cast<std::size_t>(p));
    for (int i = 0; i < p; ++i) labels[static_cast<std::size_t>(i)] = (mask >> i) & 1u;

    bool better = false;
    if (loss < ctx.best.loss) {
      better = true;
    } else if (loss == ctx.best.loss && ctx.best.found) {
      if (key < ctx.best.structure_key) {
        better = true;
      } else if (key == ctx.best.structure_key) {
        // archetype preferred at equal loss: archetype sorts first
        auto flip = [](const std::vector<char>& v) {
          std::vector<char> w(v.size());
          for (std::size_t i = 0; i < v.size(); ++i) w[i] = static_cast<char>(1 - v[i]);
          return w;
        };
        better = flip(labels) < flip(ctx.best.labels);
      }
    }
    if (better) {
      ctx.best.loss = loss;
      ctx.best.root = root;
      ctx.best.structure_key = key;
      ctx.best.labels = labels;
      ctx.best.found = true;
    }
  }
}

}  // namespace

FitResult brute_force_fit(const EstimateTable& table, const SearchConfig& config) {
  validate_search_config(config);
  if (table.rows.empty()) throw ValidationError("cannot fit an empty table");

  const double cand = static_cast<double>(config.splits) * table.num_covariates();
  const double internal = std::pow(2.0, config.depth) - 1.0;
  const double guard =
      std::pow(cand, internal) * std::pow(2.0, std::pow(2.0, config.depth));
  if (!(guard <= 1e7))
    throw ValidationError("enumeration too large: about " + std::to_string(guard) +
                          " configurations exceed the 1e7 guard");

  BruteCtx ctx{Ctx{table, config}, {}};
  std::vector<int> scope(static_cast<std::size_t>(table.num_types()));
  for (int i = 0; i < table.num_types(); ++i) scope[static_cast<std::size_t>(i)] = i;

  std::vector<std::vector<std::pair<int, int>>> keys;
  auto structures = enumerate_structures(ctx, scope, config.depth, &keys);
  for (std::size_t i = 0; i < structures.size(); ++i)
    consider_labelings(ctx, structures[i], keys[i]);

  if (!ctx.best.found) throw ValidationError("no feasible configuration");
  return finish_fit(table, config, ctx.best.root.get(), ctx.best.labels, ctx.best.loss,
                    ctx.best.loss, true, ctx.base.stats);
}

PartitionFitter gaware_fitter(const SearchConfig& base) {
  return [base](const EstimateTable& table, const RewardParams& params) {
    SearchConfig config = base;
    config.sigma2 = params.sigma2;
    config.group_count = params.group_count;
    return partition_from_tree(fit_gaware_tree(table, config).tree, table);
  };
}

PartitionFitter brute_force_fitter(const SearchConfig& base) {
  return [base](const EstimateTable& table, const RewardParams& params) {
    SearchConfig config = base;
    config.sigma2 = params.sigma2;
    config.group_count = params.group_count;
    return partition_from_tree(brute_force_fit(table, config).tree, table);
  };
}

}  // namespace gaware
