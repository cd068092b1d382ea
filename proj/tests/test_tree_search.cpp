#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gaware/tree_search.hpp"
#include "helpers.hpp"

#include <cmath>
#include <functional>

using namespace gaware;

namespace {

std::vector<int> all_rows(const EstimateTable& table) {
  std::vector<int> rows(static_cast<std::size_t>(table.num_types()));
  for (int i = 0; i < table.num_types(); ++i) rows[static_cast<std::size_t>(i)] = i;
  return rows;
}

double weighted_sse(const EstimateTable& table, const std::vector<int>& rows) {
  double mass = 0.0, mean = 0.0;
  for (int i : rows) {
    mass += table.row(i).weight;
    mean += table.row(i).weight * table.row(i).phi_hat[0];
  }
  mean /= mass;
  double sse = 0.0;
  for (int i : rows) {
    const double dev = mean - table.row(i).phi_hat[0];
    sse += table.row(i).weight * dev * dev;
  }
  return sse;
}

double weighted_mean(const EstimateTable& table, const std::vector<int>& rows) {
  double mass = 0.0, mean = 0.0;
  for (int i : rows) {
    mass += table.row(i).weight;
    mean += table.row(i).weight * table.row(i).phi_hat[0];
  }
  return mean / mass;
}

/// Independent implementation of an ordinary weighted regression tree with
/// the same candidate placement, minimum-count rule, and tie-breaking.
struct PlainTree {
  std::vector<std::pair<int, double>> splits;  // preorder
  std::vector<double> leaf_means;              // left-to-right
  double sse = 0.0;
};

PlainTree plain_regression_tree(const EstimateTable& table, const std::vector<int>& scope,
                                int depth, int splits, int min_leaf) {
  const int r = table.num_covariates();
  PlainTree best;
  best.sse = std::numeric_limits<double>::infinity();

  for (int var = 0; var < r; ++var) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (int i : scope) {
      lo = std::min(lo, table.row(i).covariates[var]);
      hi = std::max(hi, table.row(i).covariates[var]);
    }
    if (!(hi > lo)) continue;
    for (int k = 1; k <= splits; ++k) {
      const double value = lo + k * (hi - lo) / (splits + 1);
      std::vector<int> left, right;
      for (int i : scope)
        (table.row(i).covariates[var] <= value ? left : right).push_back(i);
      if (left.empty() || right.empty()) continue;
      if (static_cast<int>(left.size()) <= min_leaf ||
          static_cast<int>(right.size()) <= min_leaf)
        continue;

      PlainTree candidate;
      candidate.splits.emplace_back(var, value);
      if (depth == 1) {
        candidate.sse = weighted_sse(table, left) + weighted_sse(table, right);
        candidate.leaf_means = {weighted_mean(table, left), weighted_mean(table, right)};
      } else {
        const PlainTree l = plain_regression_tree(table, left, depth - 1, splits, min_leaf);
        const PlainTree rgt = plain_regression_tree(table, right, depth - 1, splits, min_leaf);
        candidate.sse = l.sse + rgt.sse;
        candidate.splits.insert(candidate.splits.end(), l.splits.begin(), l.splits.end());
        candidate.splits.insert(candidate.splits.end(), rgt.splits.begin(), rgt.splits.end());
        candidate.leaf_means = l.leaf_means;
        candidate.leaf_means.insert(candidate.leaf_means.end(), rgt.leaf_means.begin(),
                                    rgt.leaf_means.end());
      }
      if (candidate.sse < best.sse) best = std::move(candidate);
    }
  }
  if (!std::isfinite(best.sse)) {
    best.sse = weighted_sse(table, scope);
    best.leaf_means = {weighted_mean(table, scope)};
    best.splits.clear();
  }
  return best;
}

SearchConfig basic_config(double sigma2, int depth, int splits, int groups, int min_leaf = 1) {
  SearchConfig config;
  config.sigma2 = SigmaCost(sigma2);
  config.depth = depth;
  config.splits = splits;
  config.group_count = groups;
  config.min_leaf = min_leaf;
  return config;
}

}  // namespace

TEST_CASE("separable clusters with zero noise: both children archetypes, zero loss") {
  // two constant clusters; the single midpoint split separates them
  const EstimateTable table = testing::make_table(
      {1, 1, 1, 1}, {2.0, 2.0, 7.0, 7.0}, {0, 0, 0, 0},
      {Vector::Constant(1, 0.0), Vector::Constant(1, 0.1), Vector::Constant(1, 1.0),
       Vector::Constant(1, 1.1)});
  const SearchConfig config = basic_config(100.0, 1, 1, 3);
  const HelperResult helper = helper_tree(table, config);
  CHECK(helper.loss == doctest::Approx(0.0).epsilon(1e-14));

  const FitResult fit = fit_gaware_tree(table, config);
  CHECK(fit.breakdown.ignorance_mass == 0.0);
  CHECK(fit.tree.archetype_leaf_count() == 2);
  CHECK(fit.epsilon == 0.0);
}

TEST_CASE("outlier region goes to ignorance and matches hand enumeration") {
  // outlier profile duplicated so the minimum-count rule never binds
  const EstimateTable table = testing::make_table(
      {1, 1, 1, 1, 1, 1}, {0.0, 0.05, 0.1, 0.15, 50.0, -50.0},
      {0.01, 0.01, 0.01, 0.01, 0.01, 0.01},
      {Vector::Constant(1, 0.0), Vector::Constant(1, 0.0), Vector::Constant(1, 0.25),
       Vector::Constant(1, 0.25), Vector::Constant(1, 0.9), Vector::Constant(1, 0.9)});
  const SearchConfig config = basic_config(1.0, 1, 3, 3);
  const HelperResult helper = helper_tree(table, config);

  // exhaustive oracle over (split value, left label, right label)
  double oracle = std::numeric_limits<double>::infinity();
  const auto rows = all_rows(table);
  for (int k = 1; k <= config.splits; ++k) {
    const double value = 0.0 + k * 0.9 / (config.splits + 1);
    std::vector<int> left, right;
    for (int i : rows) (table.row(i).covariates[0] <= value ? left : right).push_back(i);
    if (left.empty() || right.empty()) continue;
    for (int label_left = 0; label_left < 2; ++label_left)
      for (int label_right = 0; label_right < 2; ++label_right) {
        auto side_cost = [&](const std::vector<int>& side, int archetype) -> double {
          double mass = 0.0;
          for (int i : side) mass += table.row(i).weight;
          if (!archetype) return config.sigma2.scalar * mass;
          if (static_cast<int>(side.size()) <= config.min_leaf)
            return std::numeric_limits<double>::infinity();
          double delta = 0.0;
          const double mean = weighted_mean(table, side);
          for (int i : side) {
            const double dev = mean - table.row(i).phi_hat[0];
            delta += table.row(i).weight * (dev * dev - table.row(i).eta2_hat[0]);
          }
          return delta;
        };
        oracle = std::min(oracle, side_cost(left, label_left) + side_cost(right, label_right));
      }
  }
  CHECK(helper.loss == doctest::Approx(oracle).epsilon(1e-10));

  // the outlier side is abstained, the quiet side is an archetype
  const FitResult fit = fit_gaware_tree(table, config);
  const Partition part = partition_from_tree(fit.tree, table);
  CHECK(part.label_of(table.row(4).type_id) == 1);
  CHECK(part.label_of(table.row(5).type_id) == 1);
  CHECK(part.label_of(table.row(0).type_id) > 1);
}

TEST_CASE("depth-2 greedy equals the exhaustive optimum when groups are plentiful") {
  Rng rng(101);
  for (int rep = 0; rep < 60; ++rep) {
    testing::RandomTableOptions opt;
    opt.num_profiles = 5;
    opt.types_per_profile = 2;
    opt.covariates = 2;
    const EstimateTable table = testing::random_table(rng, opt);
    const SearchConfig config = basic_config(0.2 + rng.uniform(), 2, 3, 5);

    const FitResult greedy = fit_gaware_tree(table, config);
    const FitResult exact = brute_force_fit(table, config);
    CHECK(std::abs(greedy.breakdown.total - exact.breakdown.total) < 1e-10);
    CHECK(greedy.epsilon == 0.0);
    CHECK(std::abs(greedy.helper_loss - exact.helper_loss) < 1e-10);
  }
}

TEST_CASE("no-abstention limit reproduces an ordinary regression tree") {
  Rng rng(113);
  for (int rep = 0; rep < 40; ++rep) {
    testing::RandomTableOptions opt;
    opt.num_profiles = 6;
    opt.types_per_profile = 2;
    opt.covariates = 2;
    const EstimateTable table = testing::random_table(rng, opt);
    const int depth = 1 + static_cast<int>(rng.below(2));
    const SearchConfig config = basic_config(1e9, depth, 3, 1 << (depth + 1));

    const FitResult fit = fit_gaware_tree(table, config);
    CHECK(fit.breakdown.ignorance_mass == 0.0);

    const PlainTree oracle =
        plain_regression_tree(table, all_rows(table), depth, config.splits, config.min_leaf);
    const HelperResult helper = helper_tree(table, config);
    const auto fitted_splits = split_list(helper);
    REQUIRE(fitted_splits.size() == oracle.splits.size());
    for (std::size_t i = 0; i < oracle.splits.size(); ++i) {
      CHECK(fitted_splits[i].first == oracle.splits[i].first);
      CHECK(fitted_splits[i].second == doctest::Approx(oracle.splits[i].second).epsilon(1e-12));
    }
    REQUIRE(fit.tree.leaves.size() == oracle.leaf_means.size());
    for (std::size_t i = 0; i < oracle.leaf_means.size(); ++i) {
      REQUIRE_FALSE(fit.tree.leaves[i].ignorance);
      CHECK(std::abs(fit.tree.leaves[i].prediction[0] - oracle.leaf_means[i]) < 1e-10);
    }
  }
}

TEST_CASE("single-type table: trivial one-leaf decisions") {
  const EstimateTable table = testing::make_table({1.0}, {0.5}, {0.1});
  const SearchConfig config = basic_config(1.0, 2, 3, 3);
  const FitResult greedy = fit_gaware_tree(table, config);
  const FitResult exact = brute_force_fit(table, config);
  // a single type cannot clear the minimum archetype count
  CHECK(greedy.breakdown.ignorance_mass == 1.0);
  CHECK(exact.breakdown.ignorance_mass == 1.0);
  CHECK(greedy.tree.leaves.size() == 1);
}

TEST_CASE("budget truncation keeps the leaves with the best net gain") {
  // four clusters, only two archetypes allowed (G = 3); cluster deltas are
  // ~0 so the net gain delta - cost*mass favours the heavy clusters
  const EstimateTable table = testing::make_table(
      {4, 4, 1, 1, 4, 4, 1, 1}, {0, 0, 2, 2, 4, 4, 6, 6}, {0, 0, 0, 0, 0, 0, 0, 0},
      {Vector::Constant(1, 0.0), Vector::Constant(1, 0.05), Vector::Constant(1, 0.3),
       Vector::Constant(1, 0.35), Vector::Constant(1, 0.6), Vector::Constant(1, 0.65),
       Vector::Constant(1, 0.9), Vector::Constant(1, 0.95)});
  const SearchConfig config = basic_config(10.0, 2, 3, 3);
  const FitResult fit = fit_gaware_tree(table, config);

  REQUIRE(fit.tree.leaves.size() == 4);
  CHECK(fit.tree.archetype_leaf_count() == 2);
  // heavy clusters (weight share 0.4 each) survive, light ones abstain
  CHECK_FALSE(fit.tree.leaves[0].ignorance);
  CHECK(fit.tree.leaves[1].ignorance);
  CHECK_FALSE(fit.tree.leaves[2].ignorance);
  CHECK(fit.tree.leaves[3].ignorance);
  // archetype labels run left to right
  CHECK(fit.tree.leaves[0].label == 2);
  CHECK(fit.tree.leaves[2].label == 3);
  CHECK(fit.epsilon > 0.0);

  // certified error is an upper bound on the true optimality gap
  const FitResult exact = brute_force_fit(table, config);
  const double gap = -fit.breakdown.total - (-exact.breakdown.total);
  CHECK(gap >= -1e-12);
  CHECK(fit.epsilon >= gap - 1e-10);
}

TEST_CASE("an exactly indifferent truncated leaf certifies a zero gap") {
  // the third cluster's delta equals its abstention cost, so truncating it
  // to ignorance costs nothing
  const double w = 0.25, dev = 0.1;
  const double sigma2 = dev * dev;  // delta of the +-dev cluster == sigma2 * mass
  const EstimateTable table = testing::make_table(
      {w, w, w, w, w, w}, {0, 0, 2, 2, 4 - dev, 4 + dev}, {0, 0, 0, 0, 0, 0},
      {Vector::Constant(1, 0.0), Vector::Constant(1, 0.05), Vector::Constant(1, 0.45),
       Vector::Constant(1, 0.5), Vector::Constant(1, 0.9), Vector::Constant(1, 0.95)});
  SearchConfig config = basic_config(sigma2, 2, 3, 3);
  const FitResult fit = fit_gaware_tree(table, config);
  const FitResult exact = brute_force_fit(table, config);
  const double gap = -fit.breakdown.total - (-exact.breakdown.total);
  CHECK(std::abs(fit.epsilon - gap) < 1e-10);
}

TEST_CASE("epsilon is always nonnegative and certified") {
  Rng rng(127);
  for (int rep = 0; rep < 60; ++rep) {
    testing::RandomTableOptions opt;
    opt.num_profiles = 6;
    opt.types_per_profile = 2;
    const EstimateTable table = testing::random_table(rng, opt);
    const SearchConfig config = basic_config(rng.uniform() * 2.0, 2, 2, 3);
    const FitResult greedy = fit_gaware_tree(table, config);
    CHECK(greedy.epsilon >= 0.0);
    const FitResult exact = brute_force_fit(table, config);
    // greedy never reports a better objective than the true optimum
    CHECK(greedy.breakdown.total <= exact.breakdown.total + 1e-10);
    CHECK(greedy.epsilon >= (-greedy.breakdown.total) - (-exact.breakdown.total) - 1e-10);
  }
}

TEST_CASE("ignorance mass is weakly decreasing in the abstention cost") {
  Rng rng(131);
  for (int rep = 0; rep < 20; ++rep) {
    testing::RandomTableOptions opt;
    opt.num_profiles = 4;
    opt.types_per_profile = 2;
    opt.covariates = 1;
    const EstimateTable table = testing::random_table(rng, opt);
    SearchConfig config = basic_config(0.0, 1, 2, 5);
    std::vector<double> grid;
    for (int i = 0; i < 8; ++i) grid.push_back(0.05 * (i + 1) * (i + 1));
    const auto rows = sigma_frontier(table, brute_force_fitter(config), grid, 5);
    for (std::size_t i = 1; i < rows.size(); ++i) {
      REQUIRE(rows[i].ok);
      CHECK(rows[i].ignorance_mass <= rows[i - 1].ignorance_mass + 1e-12);
    }
  }
}

TEST_CASE("large enough cost drives the ignorance mass to zero") {
  Rng rng(137);
  testing::RandomTableOptions opt;
  opt.num_profiles = 5;
  opt.types_per_profile = 2;
  opt.covariates = 1;
  opt.eta2_max = 0.0;  // nonnegative deltas
  const EstimateTable table = testing::random_table(rng, opt);
  double lo = 1e300, hi = -1e300;
  for (const auto& row : table.rows) {
    lo = std::min(lo, row.phi_hat[0]);
    hi = std::max(hi, row.phi_hat[0]);
  }
  const double bound = (hi - lo) * (hi - lo) + 1.0;
  const SearchConfig config = basic_config(bound, 1, 2, 5);
  const auto rows = sigma_frontier(table, brute_force_fitter(config), {bound}, 5);
  REQUIRE(rows[0].ok);
  CHECK(rows[0].ignorance_mass == 0.0);
}

TEST_CASE("candidate evaluations match the analytic recursion") {
  Rng rng(139);
  testing::RandomTableOptions opt;
  opt.num_profiles = 12;
  opt.types_per_profile = 1;  // all-distinct values: every variable always splits
  opt.covariates = 2;
  const EstimateTable table = testing::random_table(rng, opt);

  // independent count of the candidates the search must form
  std::function<long long(const std::vector<int>&, int, int)> expected =
      [&](const std::vector<int>& scope, int depth, int splits) -> long long {
    long long total = 0;
    for (int var = 0; var < table.num_covariates(); ++var) {
      double lo = 1e300, hi = -1e300;
      for (int i : scope) {
        lo = std::min(lo, table.row(i).covariates[var]);
        hi = std::max(hi, table.row(i).covariates[var]);
      }
      if (!(hi > lo)) continue;
      for (int k = 1; k <= splits; ++k) {
        ++total;
        if (depth > 1) {
          const double value = lo + k * (hi - lo) / (splits + 1);
          std::vector<int> left, right;
          for (int i : scope)
            (table.row(i).covariates[var] <= value ? left : right).push_back(i);
          total += expected(left, depth - 1, splits) + expected(right, depth - 1, splits);
        }
      }
    }
    return total;
  };

  for (int depth = 1; depth <= 3; ++depth) {
    for (int splits = 1; splits <= 3; ++splits) {
      SearchConfig config = basic_config(0.5, depth, splits, 1 << (depth + 1));
      const HelperResult helper = helper_tree(table, config);
      CHECK(helper.stats.candidate_evals == expected(all_rows(table), depth, splits));
    }
  }
}

TEST_CASE("abstaining leaves carry no predictions") {
  const EstimateTable table = testing::make_table(
      {1, 1, 1, 1}, {0.0, 0.1, 30.0, -30.0}, {0, 0, 0, 0},
      {Vector::Constant(1, 0.0), Vector::Constant(1, 0.1), Vector::Constant(1, 1.0),
       Vector::Constant(1, 1.0)});
  const FitResult fit = fit_gaware_tree(table, basic_config(0.5, 1, 3, 3));
  bool found_ignorance = false;
  for (const auto& leaf : fit.tree.leaves) {
    if (leaf.ignorance) {
      found_ignorance = true;
      CHECK(leaf.prediction.size() == 0);
      CHECK(leaf.label == 1);
    }
  }
  CHECK(found_ignorance);
}

TEST_CASE("a scope with no feasible split falls back to pinned ignorance") {
  // two singleton profiles: any split isolates one type as a preferred
  // archetype below the count floor
  const EstimateTable table = testing::make_table(
      {1, 1}, {0.0, 1.0}, {0, 0}, {Vector::Constant(1, 0.0), Vector::Constant(1, 1.0)});
  const SearchConfig config = basic_config(1e9, 1, 3, 3);
  const HelperResult helper = helper_tree(table, config);
  CHECK(helper.infeasible_scope);
  REQUIRE(helper.root->is_leaf);
  CHECK(helper.root->pinned_ignorance);

  const FitResult fit = fit_gaware_tree(table, config);
  REQUIRE(fit.tree.leaves.size() == 1);
  CHECK(fit.tree.leaves[0].ignorance);
  CHECK(fit.tree.leaves[0].infeasible_scope);
  CHECK(fit.epsilon == 0.0);
}

TEST_CASE("quantile placement splits heavy-tailed covariates") {
  // one far outlier makes every equal-spaced candidate useless
  std::vector<Vector> covs;
  std::vector<double> phi;
  for (int i = 0; i < 8; ++i) {
    covs.push_back(Vector::Constant(1, static_cast<double>(i)));
    phi.push_back(i < 4 ? 0.0 : 5.0);
  }
  covs.push_back(Vector::Constant(1, 1e9));
  phi.push_back(5.0);
  std::vector<double> weights(9, 1.0), eta2(9, 0.0);
  const EstimateTable table = testing::make_table(weights, phi, eta2, covs);

  SearchConfig config = basic_config(1e9, 1, 3, 5, 2);
  config.split_rule = SplitRule::Quantile;
  const FitResult fit = fit_gaware_tree(table, config);
  REQUIRE(fit.tree.nodes.size() == 1);
  CHECK(fit.tree.nodes[0].split_value < 8.0);  // inside the bulk, not the tail
}

TEST_CASE("guards and validation") {
  const EstimateTable table = testing::make_table({1, 1}, {0, 1}, {0, 0});
  SearchConfig config = basic_config(1.0, 4, 100, 3);
  CHECK_THROWS_WITH_AS(brute_force_fit(table, config), doctest::Contains("guard"),
                       ValidationError);
  CHECK_THROWS_AS(fit_gaware_tree(EstimateTable{}, basic_config(1.0, 1, 1, 2)),
                  ValidationError);
  CHECK_THROWS_AS(fit_gaware_tree(table, basic_config(-1.0, 1, 1, 2)), ValidationError);
  CHECK_THROWS_AS(fit_gaware_tree(table, basic_config(1.0, 0, 1, 2)), ValidationError);
}
