#include "gaware/forest.hpp"

#include "gaware/csv_io.hpp"
#include "gaware/parallel.hpp"
#include "gaware/rng.hpp"
#include "gaware/tree_json.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <numeric>

namespace gaware {

namespace {

EstimateTable bootstrap_table(const EstimateTable& table, Rng& rng) {
  const int n = table.num_types();
  std::vector<int> multiplicity(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < n; ++i)
    ++multiplicity[static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(n)))];

  EstimateTable boot;
  boot.outcome_names = table.outcome_names;
  boot.covariate_names = table.covariate_names;
  for (int i = 0; i < n; ++i) {
    if (!multiplicity[static_cast<std::size_t>(i)]) continue;
    TypeRow row = table.row(i);
    row.weight *= multiplicity[static_cast<std::size_t>(i)];
    boot.rows.push_back(std::move(row));
  }
  finalize_table(boot);
  return boot;
}

EstimateTable project_columns(const EstimateTable& table, const std::vector<int>& variables) {
  EstimateTable sub;
  sub.outcome_names = table.outcome_names;
  for (int v : variables) sub.covariate_names.push_back(table.covariate_names[static_cast<std::size_t>(v)]);
  for (const auto& row : table.rows) {
    TypeRow r = row;
    r.covariates.resize(static_cast<Eigen::Index>(variables.size()));
    for (std::size_t j = 0; j < variables.size(); ++j)
      r.covariates[static_cast<Eigen::Index>(j)] = row.covariates[variables[j]];
    sub.rows.push_back(std::move(r));
  }
  sub.provenance = table.provenance;
  return sub;
}

}  // namespace

ForestModel fit_forest(const EstimateTable& table, const SearchConfig& config,
                       const ForestOptions& options) {
  const int r = table.num_covariates();
  if (options.tree_count < 1) throw ValidationError("forest needs at least one tree");
  if (options.variables_per_tree < 1 || options.variables_per_tree >= r)
    throw ValidationError("variables per tree must satisfy 1 <= m < r");

  ForestModel model;
  model.variables_per_tree = options.variables_per_tree;
  model.trees.resize(static_cast<std::size_t>(options.tree_count));

  parallel_for(options.tree_count, options.threads, [&](int t) {
    const std::uint64_t tree_seed = derive_seed(options.seed, static_cast<std::uint64_t>(t));
    Rng rng(tree_seed);

    EstimateTable draw = options.bootstrap ? bootstrap_table(table, rng) : table;

    std::vector<int> all(static_cast<std::size_t>(r));
    std::iota(all.begin(), all.end(), 0);
    rng.shuffle(all);
    std::vector<int> variables(all.begin(), all.begin() + options.variables_per_tree);
    std::sort(variables.begin(), variables.end());

    FitResult fit = fit_gaware_tree(project_columns(draw, variables), config);
    // map split indices back to the full covariate space
    for (auto& node : fit.tree.nodes)
      node.split_var = variables[static_cast<std::size_t>(node.split_var)];
    fit.tree.meta.covariate_names = table.covariate_names;

    ForestTree entry;
    entry.tree = std::move(fit.tree);
    entry.variables = std::move(variables);
    entry.seed = tree_seed;
    model.trees[static_cast<std::size_t>(t)] = std::move(entry);
  });
  return model;
}

std::vector<TypeScore> predict_with_scores(const ForestModel& model, const EstimateTable& table) {
  if (model.trees.empty()) throw ValidationError("forest has no trees");
  const int q = table.num_outcomes();
  std::vector<TypeScore> scores;
  scores.reserve(table.rows.size());

  for (const auto& row : table.rows) {
    TypeScore entry;
    entry.type_id = row.type_id;
    Vector sum = Vector::Zero(q);
    int predicting = 0;
    for (const auto& member : model.trees) {
      const TreeLeaf& leaf =
          member.tree.leaves[static_cast<std::size_t>(member.tree.leaf_for(row.covariates))];
      if (!leaf.ignorance) {
        sum += leaf.prediction;
        ++predicting;
      }
    }
    entry.score = static_cast<double>(predicting) / static_cast<double>(model.trees.size());
    if (predicting > 0) entry.prediction = sum / predicting;
    scores.push_back(std::move(entry));
  }
  return scores;
}

void save_forest(const ForestModel& model, const std::string& path) {
  nlohmann::json j;
  j["variables_per_tree"] = model.variables_per_tree;
  j["trees"] = nlohmann::json::array();
  for (const auto& member : model.trees) {
    nlohmann::json entry;
    entry["seed"] = member.seed;
    entry["variables"] = member.variables;
    entry["tree"] = nlohmann::json::parse(tree_to_json(member.tree));
    j["trees"].push_back(std::move(entry));
  }
  atomic_write(path, j.dump(2) + "\n");
}

ForestModel load_forest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
    ForestModel model;
    model.variables_per_tree = j.at("variables_per_tree").get<int>();
    for (const auto& entry : j.at("trees")) {
      ForestTree member;
      member.seed = entry.at("seed").get<std::uint64_t>();
      member.variables = entry.at("variables").get<std::vector<int>>();
      member.tree = tree_from_json(entry.at("tree").dump());
      model.trees.push_back(std::move(member));
    }
    return model;
  } catch (const nlohmann::json::exception& err) {
    throw ValidationError(std::string("malformed forest JSON: ") + err.what());
  }
}

}  // namespace gaware
