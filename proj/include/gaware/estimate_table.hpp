#pragma once

#include <Eigen/Core>

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace gaware {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Thrown on malformed or inconsistent inputs (files, tables, models).
class ValidationError : public std::runtime_error {
public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// One observation type: an id, its covariate vector, a target-population
/// weight, and per-outcome effect estimates with their sampling variances.
struct TypeRow {
  std::string type_id;
  Vector covariates;
  double weight = 0.0;
  Vector phi_hat;
  Vector eta2_hat;
};

/// Ingestion bookkeeping carried alongside a table.
struct Provenance {
  double weight_renorm = 1.0;  // factor applied so weights sum to one
  std::vector<std::string> notes;
};

struct EstimateTable {
  std::vector<TypeRow> rows;
  std::vector<std::string> outcome_names;
  std::vector<std::string> covariate_names;
  Provenance provenance;

  int num_types() const { return static_cast<int>(rows.size()); }
  int num_outcomes() const { return static_cast<int>(outcome_names.size()); }
  int num_covariates() const { return static_cast<int>(covariate_names.size()); }

  const TypeRow& row(int i) const { return rows[static_cast<std::size_t>(i)]; }

  /// Index of the row with the given id, or -1.
  int find(const std::string& type_id) const;
};

/// Checks all table invariants (unique ids, positive weights, matched
/// dimensions, finite values, nonnegative variances). Throws ValidationError
/// naming the first offending row.
void validate_table(const EstimateTable& table);

/// Sorts rows by ascending type id and rescales weights to sum to one,
/// recording the factor in provenance. Throws if any weight is nonpositive.
/// Adds a provenance warning when the max/min weight ratio exceeds 1e6.
void finalize_table(EstimateTable& table);

/// One experimental unit (per-outcome observed outcomes, a binary treatment,
/// its known assignment probability, covariates, and an environment id).
struct StudyUnit {
  Vector outcomes;
  int treatment = 0;
  double propensity = 0.5;
  Vector covariates;
  std::string environment;
};

struct RawStudy {
  std::vector<StudyUnit> units;
  std::vector<std::string> outcome_names;
  std::vector<std::string> covariate_names;

  int num_units() const { return static_cast<int>(units.size()); }
  int num_outcomes() const { return static_cast<int>(outcome_names.size()); }
};

/// Throws when a unit has a propensity outside (0,1) or inconsistent sizes.
void validate_study(const RawStudy& study);

/// Group assignment over the types of a table. Label 1 is the basin of
/// ignorance; labels 2..group_count are archetypes.
struct Partition {
  std::map<std::string, int> labels;  // ordered by id for determinism
  int group_count = 2;

  int label_of(const std::string& type_id) const {
    auto it = labels.find(type_id);
    if (it == labels.end())
      throw ValidationError("partition does not cover type '" + type_id + "'");
    return it->second;
  }
  bool predicts(const std::string& type_id) const { return label_of(type_id) != 1; }
};

/// Checks that the partition covers every table row with a label in
/// {1..group_count}.
void validate_partition(const Partition& part, const EstimateTable& table);

}  // namespace gaware
