#include "gaware/reward.hpp"

#include <cmath>
#include <set>

namespace gaware {

std::map<int, Vector> group_means(const EstimateTable& table, const Partition& part) {
  std::map<int, Vector> sums;
  std::map<int, double> mass;
  const int q = table.num_outcomes();
  for (const auto& row : table.rows) {
    const int g = part.label_of(row.type_id);
    if (g <= 1) continue;
    auto [it, fresh] = sums.try_emplace(g, Vector::Zero(q));
    it->second += row.weight * row.phi_hat;
    mass[g] += row.weight;
  }
  std::map<int, Vector> means;
  for (auto& [g, sum] : sums)
    if (mass[g] > 0.0) means[g] = sum / mass[g];
  return means;
}

double group_delta(const EstimateTable& table, const Partition& part, int g) {
  if (g <= 1) throw ValidationError("group_delta is defined for archetype groups only");
  const int q = table.num_outcomes();
  Vector sum = Vector::Zero(q);
  double mass = 0.0;
  for (const auto& row : table.rows) {
    if (part.label_of(row.type_id) != g) continue;
    sum += row.weight * row.phi_hat;
    mass += row.weight;
  }
  if (mass <= 0.0) return 0.0;
  const Vector mean = sum / mass;
  double delta = 0.0;
  for (const auto& row : table.rows) {
    if (part.label_of(row.type_id) != g) continue;
    delta += row.weight * ((mean - row.phi_hat).squaredNorm() - row.eta2_hat.sum());
  }
  return delta;
}

RewardBreakdown empirical_reward(const EstimateTable& table, const Partition& part,
                                 const RewardParams& params) {
  const int q = table.num_outcomes();
  const auto means = group_means(table, part);

  RewardBreakdown out;
  if (q > 1)
    out.per_outcome.assign(static_cast<std::size_t>(q), {});

  double ignorance_cost = 0.0;
  for (const auto& row : table.rows) {
    const int g = part.label_of(row.type_id);
    if (g == 1) {
      out.ignorance_mass += row.weight;
      ignorance_cost += params.sigma2.cost(row.type_id) * row.weight;
      continue;
    }
    const Vector& mean = means.at(g);
    out.delta_by_group[g] +=
        row.weight * ((mean - row.phi_hat).squaredNorm() - row.eta2_hat.sum());
    if (q > 1)
      for (int i = 0; i < q; ++i) {
        const double dev = mean[i] - row.phi_hat[i];
        out.per_outcome[static_cast<std::size_t>(i)][g] +=
            row.weight * (dev * dev - row.eta2_hat[i]);
      }
  }
  out.total = -(out.delta_sum() + ignorance_cost);
  return out;
}

double population_reward(const std::map<std::string, Vector>& truth, const EstimateTable& table,
                         const Partition& part, const std::map<std::string, Vector>& predictions,
                         const RewardParams& params) {
  double loss = 0.0;
  double abstain = 0.0;
  for (const auto& row : table.rows) {
    auto truth_it = truth.find(row.type_id);
    if (truth_it == truth.end())
      throw ValidationError("truth map missing type '" + row.type_id + "'");
    if (part.predicts(row.type_id)) {
      auto pred_it = predictions.find(row.type_id);
      if (pred_it == predictions.end())
        throw ValidationError("prediction map missing predicted type '" + row.type_id + "'");
      loss += row.weight * (pred_it->second - truth_it->second).squaredNorm();
    } else {
      abstain += params.sigma2.cost(row.type_id) * row.weight;
    }
  }
  return -loss - abstain;
}

std::vector<FrontierRow> sigma_frontier(const EstimateTable& table, const PartitionFitter& fitter,
                                        const std::vector<double>& sigma2_grid, int group_count) {
  if (sigma2_grid.empty()) throw ValidationError("sigma2 grid is empty");
  for (std::size_t i = 1; i < sigma2_grid.size(); ++i)
    if (sigma2_grid[i] < sigma2_grid[i - 1])
      throw ValidationError("sigma2 grid must be ascending");

  std::vector<FrontierRow> rows;
  for (double s2 : sigma2_grid) {
    FrontierRow row;
    row.sigma2 = s2;
    try {
      RewardParams params{SigmaCost(s2), group_count};
      const Partition part = fitter(table, params);
      const RewardBreakdown breakdown = empirical_reward(table, part, params);
      row.ignorance_mass = breakdown.ignorance_mass;
      row.r_hat = breakdown.delta_sum();
      row.w_hat = breakdown.total;
      std::set<int> archetypes;
      for (const auto& [id, g] : part.labels)
        if (g > 1) archetypes.insert(g);
      row.archetype_count = static_cast<int>(archetypes.size());
    } catch (const std::exception& err) {
      row.ok = false;
      row.error = err.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace gaware
