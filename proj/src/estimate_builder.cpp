#include "gaware/estimate_builder.hpp"

#include "gaware/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace gaware {

namespace {

using TypeKey = std::pair<std::string, std::vector<double>>;  // (environment, covariates)

TypeKey key_of(const StudyUnit& unit, TypeKeying keying) {
  std::vector<double> covs(unit.covariates.data(), unit.covariates.data() + unit.covariates.size());
  return {keying == TypeKeying::CovariatesAndEnvironment ? unit.environment : std::string(),
          std::move(covs)};
}

/// Units per type, ordered by (environment, covariates); unit lists keep
/// input order.
std::map<TypeKey, std::vector<int>> group_units(const RawStudy& study, TypeKeying keying) {
  std::map<TypeKey, std::vector<int>> groups;
  for (int i = 0; i < study.num_units(); ++i)
    groups[key_of(study.units[static_cast<std::size_t>(i)], keying)].push_back(i);
  return groups;
}

std::string type_id_for(const TypeKey& key, int rank) {
  std::ostringstream id;
  id << "e" << key.first << ":t";
  id.width(6);
  id.fill('0');
  id << rank;
  return id.str();
}

Matrix ipw_transform(const RawStudy& study) {
  const int q = study.num_outcomes();
  Matrix ytilde(study.num_units(), q);
  for (int i = 0; i < study.num_units(); ++i) {
    const StudyUnit& u = study.units[static_cast<std::size_t>(i)];
    for (int j = 0; j < q; ++j)
      ytilde(i, j) = u.treatment ? u.outcomes[j] / u.propensity
                                 : -u.outcomes[j] / (1.0 - u.propensity);
  }
  return ytilde;
}

/// Environments in ascending id order with their unit indices.
std::vector<std::pair<std::string, std::vector<int>>> environments(const RawStudy& study) {
  std::map<std::string, std::vector<int>> envs;
  for (int i = 0; i < study.num_units(); ++i)
    envs[study.units[static_cast<std::size_t>(i)].environment].push_back(i);
  return {envs.begin(), envs.end()};
}

struct DrTransform {
  Matrix ytilde;   // doubly robust pseudo-outcomes, units x outcomes
  Matrix residual; // weighted residual part only (no mean-difference term)
  std::vector<std::string> notes;
};

DrTransform dr_transform(const RawStudy& study, const RegressionOracle& oracle, int folds,
                         std::uint64_t seed) {
  if (folds < 2) throw ValidationError("cross-fitting needs at least 2 folds");
  if (!oracle) throw ValidationError("estimator requires a regression oracle");
  const int q = study.num_outcomes();
  const int r = static_cast<int>(study.covariate_names.size());

  Matrix m1 = Matrix::Zero(study.num_units(), q);
  Matrix m0 = Matrix::Zero(study.num_units(), q);
  DrTransform out;

  const auto envs = environments(study);
  for (std::size_t e = 0; e < envs.size(); ++e) {
    const auto& units = envs[e].second;
    const int ne = static_cast<int>(units.size());
    const int kf = std::min(folds, ne);

    std::vector<int> order(units.begin(), units.end());
    Rng rng(derive_seed(seed, e));
    rng.shuffle(order);
    std::map<int, int> fold_of;
    for (std::size_t i = 0; i < order.size(); ++i)
      fold_of[order[i]] = static_cast<int>(i) % kf;

    for (int f = 0; f < kf; ++f) {
      for (int arm = 0; arm <= 1; ++arm) {
        std::vector<int> train;
        for (int i : units)
          if (fold_of[i] != f && study.units[static_cast<std::size_t>(i)].treatment == arm)
            train.push_back(i);
        for (int outcome = 0; outcome < q; ++outcome) {
          OracleFit fit;
          if (train.empty()) {
            // no units of this arm outside the fold: constant fallback
            double sum = 0.0;
            int count = 0;
            for (int i : units)
              if (study.units[static_cast<std::size_t>(i)].treatment == arm) {
                sum += study.units[static_cast<std::size_t>(i)].outcomes[outcome];
                ++count;
              }
            const double mean = count ? sum / count : 0.0;
            fit = {[mean](const Vector&) { return mean; }, true};
          } else {
            Matrix x(static_cast<Eigen::Index>(train.size()), r);
            Vector y(static_cast<Eigen::Index>(train.size()));
            for (std::size_t i = 0; i < train.size(); ++i) {
              x.row(static_cast<Eigen::Index>(i)) =
                  study.units[static_cast<std::size_t>(train[i])].covariates;
              y[static_cast<Eigen::Index>(i)] =
                  study.units[static_cast<std::size_t>(train[i])].outcomes[outcome];
            }
            fit = oracle(x, y, derive_seed(seed, e * 1000 + static_cast<std::uint64_t>(f) * 10 +
                                                     static_cast<std::uint64_t>(arm),
                                           static_cast<std::uint64_t>(outcome)));
          }
          if (fit.degenerate && out.notes.empty())
            out.notes.push_back("degenerate regression fit: constant fallback used");
          Matrix& target = arm ? m1 : m0;
          for (int i : units)
            if (fold_of[i] == f)
              target(i, outcome) = fit.predict(study.units[static_cast<std::size_t>(i)].covariates);
        }
      }
    }
  }

  out.ytilde.resize(study.num_units(), q);
  out.residual.resize(study.num_units(), q);
  for (int i = 0; i < study.num_units(); ++i) {
    const StudyUnit& u = study.units[static_cast<std::size_t>(i)];
    for (int j = 0; j < q; ++j) {
      const double resid = u.treatment
                               ? (u.outcomes[j] - m1(i, j)) / u.propensity
                               : -(u.outcomes[j] - m0(i, j)) / (1.0 - u.propensity);
      out.residual(i, j) = resid;
      out.ytilde(i, j) = resid + m1(i, j) - m0(i, j);
    }
  }
  return out;
}

/// Shared per-type aggregation of unit-level pseudo-outcomes.
EstimateTable aggregate_by_type(const RawStudy& study, const Matrix& ytilde, TypeKeying keying,
                                bool per_type_variance, const Matrix* unit_eta2) {
  const int q = study.num_outcomes();
  const auto groups = group_units(study, keying);

  if (per_type_variance && unit_eta2 == nullptr) {
    std::vector<std::string> offenders;
    int rank = 0;
    for (const auto& [key, units] : groups) {
      if (units.size() < 2) offenders.push_back(type_id_for(key, rank));
      ++rank;
    }
    if (!offenders.empty()) {
      std::string msg = "types with fewer than 2 units cannot carry a variance:";
      for (const auto& id : offenders) msg += " " + id;
      throw ValidationError(msg);
    }
  }

  EstimateTable table;
  table.outcome_names = study.outcome_names;
  table.covariate_names = study.covariate_names;
  const double n = static_cast<double>(study.num_units());

  int rank = 0;
  for (const auto& [key, units] : groups) {
    TypeRow row;
    row.type_id = type_id_for(key, rank++);
    row.covariates = Eigen::Map<const Vector>(key.second.data(),
                                              static_cast<Eigen::Index>(key.second.size()));
    const double s = static_cast<double>(units.size());
    row.weight = s / n;
    row.phi_hat = Vector::Zero(q);
    for (int i : units) row.phi_hat += ytilde.row(i).transpose();
    row.phi_hat /= s;

    row.eta2_hat = Vector::Zero(q);
    if (unit_eta2 != nullptr) {
      for (int i : units) row.eta2_hat += unit_eta2->row(i).transpose();
      row.eta2_hat /= s * s;  // mean of per-unit variances over s units
    } else if (per_type_variance) {
      for (int i : units)
        row.eta2_hat += (ytilde.row(i).transpose() - row.phi_hat).array().square().matrix();
      row.eta2_hat /= s * (s - 1.0);
    }
    table.rows.push_back(std::move(row));
  }
  finalize_table(table);
  return table;
}

Vector columnwise_median(const RawStudy& study, const std::vector<int>& units) {
  const int r = static_cast<int>(study.covariate_names.size());
  Vector median(r);
  std::vector<double> column(units.size());
  for (int j = 0; j < r; ++j) {
    for (std::size_t i = 0; i < units.size(); ++i)
      column[i] = study.units[static_cast<std::size_t>(units[i])].covariates[j];
    std::sort(column.begin(), column.end());
    const std::size_t m = column.size();
    median[j] = m % 2 ? column[m / 2] : 0.5 * (column[m / 2 - 1] + column[m / 2]);
  }
  return median;
}

}  // namespace

EstimateTable ipw_pseudo_outcomes(const RawStudy& study, TypeKeying keying,
                                  bool per_type_variance) {
  validate_study(study);
  if (study.units.empty()) throw ValidationError("study has no units");
  return aggregate_by_type(study, ipw_transform(study), keying, per_type_variance, nullptr);
}

EstimateTable dr_pseudo_outcomes(const RawStudy& study, const RegressionOracle& oracle, int folds,
                                 std::uint64_t seed, TypeKeying keying, bool per_type_variance) {
  validate_study(study);
  if (study.units.empty()) throw ValidationError("study has no units");
  DrTransform dr = dr_transform(study, oracle, folds, seed);
  EstimateTable table = aggregate_by_type(study, dr.ytilde, keying, per_type_variance, nullptr);
  for (auto& note : dr.notes) table.provenance.notes.push_back(std::move(note));
  return table;
}

EstimateTable matched_variance_table(const RawStudy& study, const RegressionOracle& oracle,
                                     int folds, int match_size, std::uint64_t seed) {
  validate_study(study);
  if (study.units.empty()) throw ValidationError("study has no units");
  if (match_size < 1) throw ValidationError("match size must be >= 1");
  DrTransform dr = dr_transform(study, oracle, folds, seed);
  const int q = study.num_outcomes();
  const double n = static_cast<double>(study.num_units());

  EstimateTable table;
  table.outcome_names = study.outcome_names;
  table.covariate_names = study.covariate_names;
  for (auto& note : dr.notes) table.provenance.notes.push_back(std::move(note));

  for (const auto& [env, units] : environments(study)) {
    std::vector<std::vector<int>> groups;
    if (static_cast<int>(units.size()) < match_size + 1) {
      groups.push_back(units);
      table.provenance.notes.push_back("environment '" + env +
                                       "' smaller than match size + 1: emitted as one group");
    } else {
      std::vector<char> used(units.size(), 0);
      for (std::size_t a = 0; a < units.size(); ++a) {
        if (used[a]) continue;
        used[a] = 1;
        std::vector<std::pair<double, std::size_t>> dist;
        for (std::size_t b = 0; b < units.size(); ++b) {
          if (used[b]) continue;
          const double d2 =
              (study.units[static_cast<std::size_t>(units[a])].covariates -
               study.units[static_cast<std::size_t>(units[b])].covariates)
                  .squaredNorm();
          dist.emplace_back(d2, b);
        }
        std::sort(dist.begin(), dist.end());
        std::vector<int> group{units[a]};
        std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(match_size), dist.size());
        // exact covariate ties beyond the match size all join the group
        while (take < dist.size() && dist[take].first == 0.0) ++take;
        for (std::size_t i = 0; i < take; ++i) {
          used[dist[i].second] = 1;
          group.push_back(units[dist[i].second]);
        }
        std::sort(group.begin(), group.end());
        groups.push_back(std::move(group));
      }
    }

    int counter = 0;
    for (const auto& group : groups) {
      TypeRow row;
      std::ostringstream id;
      id << "e" << env << ":m";
      id.width(6);
      id.fill('0');
      id << counter++;
      row.type_id = id.str();
      row.covariates = columnwise_median(study, group);
      const double s = static_cast<double>(group.size());
      row.weight = s / n;
      row.phi_hat = Vector::Zero(q);
      for (int i : group) row.phi_hat += dr.ytilde.row(i).transpose();
      row.phi_hat /= s;
      row.eta2_hat = Vector::Zero(q);
      if (group.size() > 1) {
        for (int i : group)
          row.eta2_hat += (dr.ytilde.row(i).transpose() - row.phi_hat).array().square().matrix();
        row.eta2_hat /= (s - 1.0) * s;  // sample variance divided by group size
      }
      table.rows.push_back(std::move(row));
    }
  }
  finalize_table(table);
  return table;
}

EstimateTable parametric_variance_table(const RawStudy& study, const RegressionOracle& oracle,
                                        int folds, bool model_variance, std::uint64_t seed) {
  validate_study(study);
  if (study.units.empty()) throw ValidationError("study has no units");
  DrTransform dr = dr_transform(study, oracle, folds, seed);
  const int q = study.num_outcomes();

  Matrix eta2 = dr.residual.array().square();
  long floored = 0;
  if (model_variance) {
    const int r = static_cast<int>(study.covariate_names.size());
    for (const auto& [env, units] : environments(study)) {
      Matrix x(static_cast<Eigen::Index>(units.size()), r);
      for (std::size_t i = 0; i < units.size(); ++i)
        x.row(static_cast<Eigen::Index>(i)) =
            study.units[static_cast<std::size_t>(units[i])].covariates;
      for (int outcome = 0; outcome < q; ++outcome) {
        Vector y(static_cast<Eigen::Index>(units.size()));
        for (std::size_t i = 0; i < units.size(); ++i)
          y[static_cast<Eigen::Index>(i)] = eta2(units[i], outcome);
        const OracleFit fit = oracle(x, y, derive_seed(seed, 0x76617269616eULL,
                                                       static_cast<std::uint64_t>(outcome)));
        for (std::size_t i = 0; i < units.size(); ++i) {
          double value = fit.predict(study.units[static_cast<std::size_t>(units[i])].covariates);
          if (value < 0.0) {
            value = 0.0;
            ++floored;
          }
          eta2(units[i], outcome) = value;
        }
      }
    }
  }

  EstimateTable table = aggregate_by_type(study, dr.ytilde, TypeKeying::CovariatesAndEnvironment,
                                          false, &eta2);
  for (auto& note : dr.notes) table.provenance.notes.push_back(std::move(note));
  if (floored > 0)
    table.provenance.notes.push_back("fitted variances floored at zero: " +
                                     std::to_string(floored));
  return table;
}

EstimateTable build_estimates(const RawStudy& study, const EstimatorSpec& spec) {
  switch (spec.kind) {
    case EstimatorKind::Ipw:
      return ipw_pseudo_outcomes(study, spec.keying, spec.per_type_variance);
    case EstimatorKind::DoublyRobust:
      return dr_pseudo_outcomes(study, spec.oracle, spec.folds, spec.seed, spec.keying,
                                spec.per_type_variance);
    case EstimatorKind::Matched:
      return matched_variance_table(study, spec.oracle, spec.folds, spec.match_size, spec.seed);
    case EstimatorKind::Parametric:
      return parametric_variance_table(study, spec.oracle, spec.folds, spec.model_variance,
                                       spec.seed);
  }
  throw ValidationError("unknown estimator");
}

SplitPair split_for_inference(const RawStudy& study, const EstimatorSpec& spec,
                              std::uint64_t seed) {
  validate_study(study);
  if (spec.kind == EstimatorKind::Matched)
    throw ValidationError(
        "matched estimation emits group rows and cannot share type ids across halves");

  const auto groups = group_units(study, spec.keying);
  SplitPair pair;
  std::vector<int> main_units, holdout_units;
  std::map<TypeKey, int> full_count;

  std::uint64_t type_stream = 0;
  for (const auto& [key, units] : groups) {
    if (units.size() < 4) {
      std::ostringstream desc;
      desc << "e" << key.first << " x=(";
      for (std::size_t i = 0; i < key.second.size(); ++i)
        desc << (i ? "," : "") << key.second[i];
      desc << ")";
      pair.excluded_types.push_back(desc.str());
      ++type_stream;
      continue;
    }
    std::vector<int> shuffled = units;
    Rng rng(derive_seed(seed, type_stream++));
    rng.shuffle(shuffled);
    const std::size_t main_size = (shuffled.size() + 1) / 2;  // odd counts favour main
    for (std::size_t i = 0; i < shuffled.size(); ++i)
      (i < main_size ? main_units : holdout_units).push_back(shuffled[i]);
    full_count[key] = static_cast<int>(units.size());
  }
  if (full_count.empty()) throw ValidationError("no type has the four units needed to split");

  auto subset = [&](std::vector<int> indices) {
    std::sort(indices.begin(), indices.end());
    RawStudy half;
    half.outcome_names = study.outcome_names;
    half.covariate_names = study.covariate_names;
    for (int i : indices) half.units.push_back(study.units[static_cast<std::size_t>(i)]);
    return half;
  };

  EstimatorSpec half_spec = spec;
  half_spec.seed = derive_seed(spec.seed, 1);
  pair.main = build_estimates(subset(main_units), half_spec);
  half_spec.seed = derive_seed(spec.seed, 2);
  pair.holdout = build_estimates(subset(holdout_units), half_spec);

  // both halves carry the full-sample weights
  double total = 0.0;
  for (const auto& [key, count] : full_count) total += count;
  auto apply_full_weights = [&](EstimateTable& table) {
    if (table.num_types() != static_cast<int>(full_count.size()))
      throw ValidationError("split halves disagree on the type set");
    int i = 0;
    for (const auto& [key, count] : full_count)
      table.rows[static_cast<std::size_t>(i++)].weight = count / total;
    finalize_table(table);
  };
  apply_full_weights(pair.main);
  apply_full_weights(pair.holdout);
  if (!pair.excluded_types.empty()) {
    std::string note = "types excluded from the split (fewer than 4 units):";
    for (const auto& id : pair.excluded_types) note += " " + id;
    pair.main.provenance.notes.push_back(note);
    pair.holdout.provenance.notes.push_back(note);
  }
  return pair;
}

}  // namespace gaware
