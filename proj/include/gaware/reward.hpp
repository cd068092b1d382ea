#pragma once

#include "gaware/estimate_table.hpp"

#include <functional>
#include <map>
#include <optional>

namespace gaware {

/// Abstention cost: a scalar, or a per-type map covering every type.
struct SigmaCost {
  double scalar = 1.0;
  std::optional<std::map<std::string, double>> per_type;

  SigmaCost() = default;
  SigmaCost(double value) : scalar(value) {}  // NOLINT: implicit by design

  double cost(const std::string& type_id) const {
    if (!per_type) return scalar;
    auto it = per_type->find(type_id);
    if (it == per_type->end())
      throw ValidationError("per-type cost missing entry for '" + type_id + "'");
    return it->second;
  }
  bool is_scalar() const { return !per_type.has_value(); }
};

struct RewardParams {
  SigmaCost sigma2;
  int group_count = 2;
};

/// The objective and its audit trail: per-group debiased losses, the
/// abstention mass, and the total reward.
struct RewardBreakdown {
  std::map<int, double> delta_by_group;          // g > 1 only, empty groups absent
  double ignorance_mass = 0.0;
  double total = 0.0;
  std::vector<std::map<int, double>> per_outcome;  // one map per outcome when Q > 1

  double delta_sum() const {
    double s = 0.0;
    for (const auto& [g, d] : delta_by_group) s += d;
    return s;
  }
  /// Per-outcome normalization of the total, comparable across Q.
  double normalized_total(int outcome_count) const {
    return outcome_count > 0 ? total / outcome_count : total;
  }
};

/// Weighted mean estimates per archetype group; empty groups are absent.
std::map<int, Vector> group_means(const EstimateTable& table, const Partition& part);

/// Debiased within-group loss for archetype group g, summed over outcomes.
/// May be negative.
double group_delta(const EstimateTable& table, const Partition& part, int g);

/// Reward of a partition on a table: minus the debiased losses of the
/// archetype groups minus the abstention cost mass.
RewardBreakdown empirical_reward(const EstimateTable& table, const Partition& part,
                                 const RewardParams& params);

/// Population reward for known truth, a prediction map (covering at least
/// every predicted type), and the partition's abstention rule.
double population_reward(const std::map<std::string, Vector>& truth, const EstimateTable& table,
                         const Partition& part, const std::map<std::string, Vector>& predictions,
                         const RewardParams& params);

struct FrontierRow {
  double sigma2 = 0.0;
  double ignorance_mass = 0.0;
  double r_hat = 0.0;  // debiased loss over the predicted set
  double w_hat = 0.0;
  int archetype_count = 0;
  bool ok = true;
  std::string error;
};

using PartitionFitter =
    std::function<Partition(const EstimateTable&, const RewardParams&)>;

/// One fit per cost value on an ascending grid; fitter failures are recorded
/// per row and the sweep continues.
std::vector<FrontierRow> sigma_frontier(const EstimateTable& table, const PartitionFitter& fitter,
                                        const std::vector<double>& sigma2_grid, int group_count);

}  // namespace gaware
