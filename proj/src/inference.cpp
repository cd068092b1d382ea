#include "gaware/inference.hpp"

#include "gaware/stats.hpp"

#include <cmath>

namespace gaware {

namespace {

constexpr double kDegenerateVariance = 1e-12;

/// Per-type influence term of the reward gap, with group means replaced by
/// their in-sample estimates.
Vector influence_terms(const EstimateTable& table, const Partition& candidate,
                       const Partition& reference) {
  const auto cand_means = group_means(table, candidate);
  const auto ref_means = group_means(table, reference);
  Vector y(table.num_types());
  for (int i = 0; i < table.num_types(); ++i) {
    const TypeRow& row = table.row(i);
    const int gc = candidate.label_of(row.type_id);
    const int gr = reference.label_of(row.type_id);
    const double predicts_diff = (gr > 1 ? 1.0 : 0.0) - (gc > 1 ? 1.0 : 0.0);
    double value = predicts_diff * (row.phi_hat.squaredNorm() - row.eta2_hat.sum());
    double cross = 0.0;
    if (gr > 1) cross += 2.0 * ref_means.at(gr).dot(row.phi_hat);
    if (gc > 1) cross -= 2.0 * cand_means.at(gc).dot(row.phi_hat);
    y[i] = value - cross;
  }
  return y;
}

}  // namespace

OutOfSampleFit fit_out_of_sample(const SplitPair& pair, const SearchConfig& config) {
  OutOfSampleFit out;
  out.fit = fit_gaware_tree(pair.holdout, config);
  out.partition = partition_from_tree(out.fit.tree, pair.holdout);

  if (pair.main.num_types() == pair.holdout.num_types()) {
    bool identical = true;
    for (int i = 0; i < pair.main.num_types() && identical; ++i) {
      const TypeRow& a = pair.main.row(i);
      const TypeRow& b = pair.holdout.row(i);
      identical = a.type_id == b.type_id && a.phi_hat == b.phi_hat && a.eta2_hat == b.eta2_hat;
    }
    out.non_independent = identical;
  }
  return out;
}

double test_statistic(const EstimateTable& main, const Partition& candidate,
                      const Partition& reference, const SigmaCost& sigma2) {
  const RewardParams ref_params{sigma2, reference.group_count};
  const RewardParams cand_params{sigma2, candidate.group_count};
  return empirical_reward(main, reference, ref_params).total -
         empirical_reward(main, candidate, cand_params).total;
}

double variance_bound(const EstimateTable& main, const Partition& candidate,
                      const Partition& reference, bool per_group_centering) {
  const Vector y = influence_terms(main, candidate, reference);
  const int n = main.num_types();
  Vector w2(n);
  for (int i = 0; i < n; ++i) {
    const double w = main.row(i).weight;
    w2[i] = w * w;
  }

  double bound = 0.0;
  if (!per_group_centering) {
    const double center = w2.dot(y) / w2.sum();
    for (int i = 0; i < n; ++i) bound += w2[i] * (y[i] - center) * (y[i] - center);
  } else {
    std::map<int, double> mass, mean;
    for (int i = 0; i < n; ++i) {
      const int g = reference.label_of(main.row(i).type_id);
      mass[g] += w2[i];
      mean[g] += w2[i] * y[i];
    }
    for (auto& [g, m] : mean) m /= mass[g];
    for (int i = 0; i < n; ++i) {
      const int g = reference.label_of(main.row(i).type_id);
      bound += w2[i] * (y[i] - mean[g]) * (y[i] - mean[g]);
    }
  }
  return n * bound;
}

PruneResult prune_partition_set(const SplitPair& pair, const std::vector<Partition>& candidates,
                                double gamma, const SearchConfig& config,
                                bool per_group_centering) {
  if (candidates.empty()) throw ValidationError("candidate set is empty");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ValidationError("gamma must lie in (0,1)");

  PruneResult result;
  const OutOfSampleFit oos = fit_out_of_sample(pair, config);
  result.reference = oos.partition;

  const double gamma_star = gamma / static_cast<double>(candidates.size());
  const double quantile = normal_quantile(1.0 - gamma_star);
  const double root_n = std::sqrt(static_cast<double>(pair.main.num_types()));

  for (std::size_t c = 0; c < candidates.size(); ++c) {
    TestReport report;
    report.candidate_id = "candidate_" + std::to_string(c);
    report.gamma_star = gamma_star;
    report.statistic =
        test_statistic(pair.main, candidates[c], result.reference, config.sigma2);
    report.variance =
        variance_bound(pair.main, candidates[c], result.reference, per_group_centering);
    report.degenerate = report.variance < kDegenerateVariance;
    report.critical_value = quantile * std::sqrt(std::max(report.variance, 0.0));
    report.retained =
        report.degenerate || report.statistic <= report.critical_value / root_n;
    if (report.retained) result.retained.push_back(c);
    result.reports.push_back(std::move(report));
  }
  return result;
}

}  // namespace gaware
