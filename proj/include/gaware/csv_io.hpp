#pragma once

#include "gaware/estimate_table.hpp"

#include <string>

namespace gaware {

/// Reads an estimate table from CSV with header
///   type_id,w,phi_hat_<name>...,eta2_hat_<name>...,x_<name>...
/// Weights are renormalized to sum to one (factor recorded in provenance)
/// and rows sorted by type id. Throws ValidationError on schema or value
/// problems, naming the offending row.
EstimateTable load_estimate_table(const std::string& path);

/// Writes the table in the same schema with 17 significant digits.
void save_estimate_table(const EstimateTable& table, const std::string& path);

/// Reads raw experimental micro-data from CSV with header
///   y_<name>...,d,propensity,env,x_<name>...
RawStudy load_raw_study(const std::string& path);

void save_raw_study(const RawStudy& study, const std::string& path);

/// Writes `content` atomically (temp file in the same directory + rename).
void atomic_write(const std::string& path, const std::string& content);

/// Formats a double with 17 significant digits (round-trip exact).
std::string format_double(double value);

}  // namespace gaware
