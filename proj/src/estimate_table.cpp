#include "gaware/estimate_table.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace gaware {

int EstimateTable::find(const std::string& type_id) const {
  for (int i = 0; i < num_types(); ++i)
    if (rows[static_cast<std::size_t>(i)].type_id == type_id) return i;
  return -1;
}

namespace {

bool all_finite(const Vector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (!std::isfinite(v[i])) return false;
  return true;
}

}  // namespace

void validate_table(const EstimateTable& table) {
  const int q = table.num_outcomes();
  const int r = table.num_covariates();
  if (q < 1) throw ValidationError("table needs at least one outcome");
  if (r < 1) throw ValidationError("table needs at least one covariate");

  std::set<std::string> seen;
  double total = 0.0;
  for (const auto& row : table.rows) {
    if (!seen.insert(row.type_id).second)
      throw ValidationError("duplicate type_id '" + row.type_id + "'");
    if (!(row.weight > 0.0) || !std::isfinite(row.weight))
      throw ValidationError("row '" + row.type_id + "': weight must be positive");
    if (row.covariates.size() != r)
      throw ValidationError("row '" + row.type_id + "': expected " + std::to_string(r) +
                            " covariates, got " + std::to_string(row.covariates.size()));
    if (row.phi_hat.size() != q || row.eta2_hat.size() != q)
      throw ValidationError("row '" + row.type_id + "': estimate/variance count mismatch");
    if (!all_finite(row.covariates) || !all_finite(row.phi_hat) || !all_finite(row.eta2_hat))
      throw ValidationError("row '" + row.type_id + "': non-finite value");
    for (Eigen::Index i = 0; i < row.eta2_hat.size(); ++i)
      if (row.eta2_hat[i] < 0.0)
        throw ValidationError("row '" + row.type_id + "': negative variance");
    total += row.weight;
  }
  if (!table.rows.empty() && std::abs(total - 1.0) > 1e-12)
    throw ValidationError("weights sum to " + std::to_string(total) + ", expected 1");
}

void finalize_table(EstimateTable& table) {
  std::sort(table.rows.begin(), table.rows.end(),
            [](const TypeRow& a, const TypeRow& b) { return a.type_id < b.type_id; });

  double total = 0.0;
  double wmin = std::numeric_limits<double>::infinity();
  double wmax = 0.0;
  for (const auto& row : table.rows) {
    if (!(row.weight > 0.0) || !std::isfinite(row.weight))
      throw ValidationError("row '" + row.type_id + "': weight must be positive");
    total += row.weight;
    wmin = std::min(wmin, row.weight);
    wmax = std::max(wmax, row.weight);
  }
  if (table.rows.empty()) return;
  if (std::abs(total - 1.0) > 1e-12) {
    for (auto& row : table.rows) row.weight /= total;
    table.provenance.weight_renorm = total;
  }
  if (wmax / wmin > 1e6)
    table.provenance.notes.push_back("weight ratio max/min exceeds 1e6; population overlap is weak");
  validate_table(table);
}

void validate_study(const RawStudy& study) {
  const int q = study.num_outcomes();
  const int r = static_cast<int>(study.covariate_names.size());
  int idx = 0;
  for (const auto& u : study.units) {
    if (!(u.propensity > 0.0 && u.propensity < 1.0))
      throw ValidationError("unit " + std::to_string(idx) + ": propensity must lie in (0,1)");
    if (u.treatment != 0 && u.treatment != 1)
      throw ValidationError("unit " + std::to_string(idx) + ": treatment must be 0 or 1");
    if (u.outcomes.size() != q)
      throw ValidationError("unit " + std::to_string(idx) + ": outcome count mismatch");
    if (u.covariates.size() != r)
      throw ValidationError("unit " + std::to_string(idx) + ": covariate count mismatch");
    for (Eigen::Index i = 0; i < u.outcomes.size(); ++i)
      if (!std::isfinite(u.outcomes[i]))
        throw ValidationError("unit " + std::to_string(idx) + ": non-finite outcome");
    for (Eigen::Index i = 0; i < u.covariates.size(); ++i)
      if (!std::isfinite(u.covariates[i]))
        throw ValidationError("unit " + std::to_string(idx) + ": non-finite covariate");
    ++idx;
  }
}

void validate_partition(const Partition& part, const EstimateTable& table) {
  if (part.group_count < 2) throw ValidationError("partition needs group_count >= 2");
  for (const auto& row : table.rows) {
    const int g = part.label_of(row.type_id);
    if (g < 1 || g > part.group_count)
      throw ValidationError("partition label " + std::to_string(g) + " for '" + row.type_id +
                            "' outside 1.." + std::to_string(part.group_count));
  }
}

}  // namespace gaware
