#include "gaware/csv_io.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace gaware {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

double parse_double(const std::string& text, const std::string& where) {
  const char* begin = text.data();
  const char* end = begin + text.size();
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end)
    throw ValidationError(where + ": cannot parse number '" + text + "'");
  return value;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  if (lines.empty()) throw ValidationError("'" + path + "' is empty");
  return lines;
}

// Collects names following a column prefix while headers keep matching.
std::size_t take_prefixed(const std::vector<std::string>& header, std::size_t at,
                          const std::string& prefix, std::vector<std::string>* names) {
  while (at < header.size() && header[at].rfind(prefix, 0) == 0) {
    names->push_back(header[at].substr(prefix.size()));
    ++at;
  }
  return at;
}

}  // namespace

std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

void atomic_write(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write '" + tmp.string() + "'");
    out << content;
    if (!out) throw ValidationError("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, target);
}

EstimateTable load_estimate_table(const std::string& path) {
  const auto lines = read_lines(path);
  const auto header = split_line(lines[0]);
  if (header.size() < 4 || header[0] != "type_id" || header[1] != "w")
    throw ValidationError("'" + path + "': header must start with type_id,w");

  EstimateTable table;
  std::size_t at = 2;
  at = take_prefixed(header, at, "phi_hat_", &table.outcome_names);
  std::vector<std::string> eta_names;
  at = take_prefixed(header, at, "eta2_hat_", &eta_names);
  at = take_prefixed(header, at, "x_", &table.covariate_names);
  if (at != header.size())
    throw ValidationError("'" + path + "': unexpected column '" + header[at] + "'");
  if (table.outcome_names.empty() || table.covariate_names.empty())
    throw ValidationError("'" + path + "': need phi_hat_* and x_* columns");
  if (eta_names != table.outcome_names)
    throw ValidationError("'" + path + "': eta2_hat_* columns must mirror phi_hat_*");

  const int q = table.num_outcomes();
  const int r = table.num_covariates();
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto fields = split_line(lines[li]);
    const std::string where = "'" + path + "' row " + std::to_string(li);
    if (static_cast<int>(fields.size()) != 2 + 2 * q + r)
      throw ValidationError(where + ": expected " + std::to_string(2 + 2 * q + r) +
                            " fields, got " + std::to_string(fields.size()));
    TypeRow row;
    row.type_id = fields[0];
    row.weight = parse_double(fields[1], where);
    row.phi_hat.resize(q);
    row.eta2_hat.resize(q);
    row.covariates.resize(r);
    int f = 2;
    for (int i = 0; i < q; ++i) row.phi_hat[i] = parse_double(fields[f++], where);
    for (int i = 0; i < q; ++i) {
      row.eta2_hat[i] = parse_double(fields[f++], where);
      if (row.eta2_hat[i] < 0.0) throw ValidationError(where + ": negative variance");
    }
    for (int i = 0; i < r; ++i) row.covariates[i] = parse_double(fields[f++], where);
    table.rows.push_back(std::move(row));
  }
  try {
    finalize_table(table);
  } catch (const ValidationError& err) {
    throw ValidationError("'" + path + "': " + err.what());
  }
  return table;
}

void save_estimate_table(const EstimateTable& table, const std::string& path) {
  std::ostringstream out;
  out << "type_id,w";
  for (const auto& name : table.outcome_names) out << ",phi_hat_" << name;
  for (const auto& name : table.outcome_names) out << ",eta2_hat_" << name;
  for (const auto& name : table.covariate_names) out << ",x_" << name;
  out << "\n";
  for (const auto& row : table.rows) {
    out << row.type_id << "," << format_double(row.weight);
    for (Eigen::Index i = 0; i < row.phi_hat.size(); ++i)
      out << "," << format_double(row.phi_hat[i]);
    for (Eigen::Index i = 0; i < row.eta2_hat.size(); ++i)
      out << "," << format_double(row.eta2_hat[i]);
    for (Eigen::Index i = 0; i < row.covariates.size(); ++i)
      out << "," << format_double(row.covariates[i]);
    out << "\n";
  }
  atomic_write(path, out.str());
}

RawStudy load_raw_study(const std::string& path) {
  const auto lines = read_lines(path);
  const auto header = split_line(lines[0]);

  RawStudy study;
  std::size_t at = take_prefixed(header, 0, "y_", &study.outcome_names);
  if (study.outcome_names.empty())
    throw ValidationError("'" + path + "': need y_* outcome columns first");
  if (at + 3 > header.size() || header[at] != "d" || header[at + 1] != "propensity" ||
      header[at + 2] != "env")
    throw ValidationError("'" + path + "': expected d,propensity,env after outcomes");
  at += 3;
  at = take_prefixed(header, at, "x_", &study.covariate_names);
  if (study.covariate_names.empty())
    throw ValidationError("'" + path + "': need x_* covariate columns");
  if (at != header.size())
    throw ValidationError("'" + path + "': unexpected column '" + header[at] + "'");

  const int q = study.num_outcomes();
  const int r = static_cast<int>(study.covariate_names.size());
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto fields = split_line(lines[li]);
    const std::string where = "'" + path + "' row " + std::to_string(li);
    if (static_cast<int>(fields.size()) != q + 3 + r)
      throw ValidationError(where + ": field count mismatch");
    StudyUnit unit;
    unit.outcomes.resize(q);
    unit.covariates.resize(r);
    int f = 0;
    for (int i = 0; i < q; ++i) unit.outcomes[i] = parse_double(fields[f++], where);
    unit.treatment = static_cast<int>(parse_double(fields[f++], where));
    unit.propensity = parse_double(fields[f++], where);
    unit.environment = fields[f++];
    for (int i = 0; i < r; ++i) unit.covariates[i] = parse_double(fields[f++], where);
    study.units.push_back(std::move(unit));
  }
  validate_study(study);
  return study;
}

void save_raw_study(const RawStudy& study, const std::string& path) {
  std::ostringstream out;
  for (std::size_t i = 0; i < study.outcome_names.size(); ++i)
    out << (i ? "," : "") << "y_" << study.outcome_names[i];
  out << ",d,propensity,env";
  for (const auto& name : study.covariate_names) out << ",x_" << name;
  out << "\n";
  for (const auto& u : study.units) {
    for (Eigen::Index i = 0; i < u.outcomes.size(); ++i)
      out << (i ? "," : "") << format_double(u.outcomes[i]);
    out << "," << u.treatment << "," << format_double(u.propensity) << "," << u.environment;
    for (Eigen::Index i = 0; i < u.covariates.size(); ++i)
      out << "," << format_double(u.covariates[i]);
    out << "\n";
  }
  atomic_write(path, out.str());
}

}  // namespace gaware
