#pragma once

#include "gaware/estimate_table.hpp"
#include "gaware/rng.hpp"
#include "gaware/tree_model.hpp"

#include <cstdio>
#include <functional>
#include <string>
#include <vector>

namespace gaware::testing {

/// Single-outcome table from parallel arrays; covariates default to the row
/// index on one axis.
inline EstimateTable make_table(const std::vector<double>& weights,
                                const std::vector<double>& phi,
                                const std::vector<double>& eta2,
                                const std::vector<Vector>& covariates = {}) {
  EstimateTable table;
  table.outcome_names = {"y"};
  const int r = covariates.empty() ? 1 : static_cast<int>(covariates.front().size());
  for (int j = 0; j < r; ++j) table.covariate_names.push_back("x" + std::to_string(j + 1));
  for (std::size_t i = 0; i < weights.size(); ++i) {
    TypeRow row;
    char id[16];
    std::snprintf(id, sizeof(id), "t%04zu", i);
    row.type_id = id;
    row.weight = weights[i];
    row.phi_hat = Vector::Constant(1, phi[i]);
    row.eta2_hat = Vector::Constant(1, eta2[i]);
    row.covariates = covariates.empty() ? Vector::Constant(1, static_cast<double>(i))
                                        : covariates[i];
    table.rows.push_back(std::move(row));
  }
  finalize_table(table);
  return table;
}

/// Uniform-weight single-outcome table with all-distinct 1-D covariates.
inline EstimateTable line_table(const std::vector<double>& phi,
                                const std::vector<double>& eta2) {
  std::vector<double> weights(phi.size(), 1.0);
  return make_table(weights, phi, eta2);
}

struct RandomTableOptions {
  int num_profiles = 6;     // distinct covariate points
  int types_per_profile = 2;  // duplicated so group counts never hit 1
  int covariates = 2;
  int outcomes = 1;
  double phi_sd = 1.0;
  double eta2_max = 0.5;
};

/// Random table whose covariate profiles are duplicated: every split groups
/// types in blocks of at least `types_per_profile`.
inline EstimateTable random_table(Rng& rng, const RandomTableOptions& opt) {
  EstimateTable table;
  for (int j = 0; j < opt.outcomes; ++j) table.outcome_names.push_back("y" + std::to_string(j));
  for (int j = 0; j < opt.covariates; ++j)
    table.covariate_names.push_back("x" + std::to_string(j + 1));

  int id = 0;
  for (int p = 0; p < opt.num_profiles; ++p) {
    Vector profile(opt.covariates);
    for (int j = 0; j < opt.covariates; ++j) profile[j] = rng.uniform();
    for (int d = 0; d < opt.types_per_profile; ++d) {
      TypeRow row;
      char buf[16];
      std::snprintf(buf, sizeof(buf), "t%04d", id++);
      row.type_id = buf;
      row.covariates = profile;
      row.weight = 0.5 + rng.uniform();
      row.phi_hat.resize(opt.outcomes);
      row.eta2_hat.resize(opt.outcomes);
      for (int j = 0; j < opt.outcomes; ++j) {
        row.phi_hat[j] = rng.normal(0.0, opt.phi_sd);
        row.eta2_hat[j] = rng.uniform() * opt.eta2_max;
      }
      table.rows.push_back(std::move(row));
    }
  }
  finalize_table(table);
  return table;
}

/// Random structurally valid tree of the given depth (labels, predictions,
/// and split values drawn arbitrarily).
inline TreeModel random_tree(Rng& rng, int depth, int outcomes = 1, int covariates = 2) {
  TreeModel model;
  model.meta.depth = depth;
  model.meta.groups = (1 << depth) + 1;
  for (int j = 0; j < outcomes; ++j) model.meta.outcome_names.push_back("y" + std::to_string(j));
  for (int j = 0; j < covariates; ++j)
    model.meta.covariate_names.push_back("x" + std::to_string(j + 1));

  int next_label = 2;
  std::function<NodeRef(int)> grow = [&](int level) -> NodeRef {
    if (level == 0 || rng.uniform() < 0.2) {
      TreeLeaf leaf;
      if (rng.uniform() < 0.5 && next_label < model.meta.groups + 1) {
        leaf.ignorance = false;
        leaf.label = next_label++;
        leaf.prediction.resize(outcomes);
        for (int j = 0; j < outcomes; ++j) leaf.prediction[j] = rng.normal();
      }
      model.leaves.push_back(std::move(leaf));
      return leaf_ref(static_cast<int>(model.leaves.size()) - 1);
    }
    const int idx = static_cast<int>(model.nodes.size());
    model.nodes.push_back({static_cast<int>(rng.below(static_cast<std::uint64_t>(covariates))),
                           rng.normal(), 0, 0});
    const NodeRef left = grow(level - 1);
    model.nodes[static_cast<std::size_t>(idx)].left = left;
    const NodeRef right = grow(level - 1);
    model.nodes[static_cast<std::size_t>(idx)].right = right;
    return idx;
  };
  grow(depth);
  // ensure labels never exceed the declared budget
  model.meta.groups = std::max(model.meta.groups, next_label - 1);
  return model;
}

}  // namespace gaware::testing
