#include "gaware/csv_io.hpp"
#include "gaware/estimate_builder.hpp"
#include "gaware/forest.hpp"
#include "gaware/inference.hpp"
#include "gaware/simbench.hpp"
#include "gaware/tree_json.hpp"
#include "gaware/tree_search.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

constexpr const char* kVersion = "0.1.0";

using nlohmann::json;
namespace fs = std::filesystem;

std::uint64_t fnv1a_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw gaware::ValidationError("cannot open '" + path + "'");
  std::uint64_t hash = 1469598103934665603ULL;
  char buf[1 << 14];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      hash ^= static_cast<unsigned char>(buf[i]);
      hash *= 1099511628211ULL;
    }
    if (!in) break;
  }
  return hash;
}

std::string hash_hex(const std::string& path) {
  std::ostringstream out;
  out << std::hex << fnv1a_file(path);
  return out.str();
}

/// "a,b,c" or "start:stop:step" (inclusive endpoints).
std::vector<double> parse_grid(const std::string& spec) {
  std::vector<double> values;
  if (spec.find(':') != std::string::npos) {
    double start = 0.0, stop = 0.0, step = 0.0;
    char c1 = 0, c2 = 0;
    std::istringstream in(spec);
    if (!(in >> start >> c1 >> stop >> c2 >> step) || c1 != ':' || c2 != ':' || step <= 0.0)
      throw gaware::ValidationError("bad grid '" + spec + "', expected start:stop:step");
    for (double v = start; v <= stop + 1e-9 * step; v += step) values.push_back(v);
    return values;
  }
  std::stringstream in(spec);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    values.push_back(std::stod(item));
  }
  if (values.empty()) throw gaware::ValidationError("empty grid '" + spec + "'");
  return values;
}

struct ManifestWriter {
  std::string subcommand;
  json config = json::object();
  json inputs = json::object();
  std::uint64_t seed = 0;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  void input(const std::string& path) { inputs[path] = hash_hex(path); }

  void write(const std::string& primary_output) const {
    json j;
    j["subcommand"] = subcommand;
    j["version"] = kVersion;
    j["seed"] = seed;
    j["inputs"] = inputs;
    j["config"] = config;
    j["wall_time_ms"] =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
            .count();
    gaware::atomic_write(primary_output + ".manifest.json", j.dump(2) + "\n");
  }
};

/// Values from --config JSON fill in flags the user did not pass.
struct ConfigFile {
  json j;
  bool loaded = false;

  void load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw gaware::ValidationError("cannot open config '" + path + "'");
    in >> j;
    loaded = true;
  }
  template <typename T>
  void fallback(const CLI::Option* opt, T& target, const std::string& key) const {
    if (loaded && opt->count() == 0 && j.contains(key)) target = j.at(key).get<T>();
  }
};

struct TreeFlags {
  double sigma2 = 1.5;
  int depth = 2;
  int splits = 5;
  int min_leaf = 1;
  int groups = 4;
  std::string split_rule = "equal";

  CLI::Option* sigma2_opt = nullptr;
  CLI::Option* depth_opt = nullptr;
  CLI::Option* splits_opt = nullptr;
  CLI::Option* min_leaf_opt = nullptr;
  CLI::Option* groups_opt = nullptr;
  CLI::Option* rule_opt = nullptr;

  void attach(CLI::App* app, bool with_sigma2 = true) {
    if (with_sigma2)
      sigma2_opt = app->add_option("--sigma2", sigma2, "abstention cost")
                       ->envname("GAWARE_SIGMA2");
    depth_opt = app->add_option("--depth", depth, "tree depth");
    splits_opt = app->add_option("--splits", splits, "split candidates per variable");
    min_leaf_opt = app->add_option("--min-leaf", min_leaf, "minimum types per archetype leaf");
    groups_opt = app->add_option("--groups", groups, "group budget G");
    rule_opt = app->add_option("--split-rule", split_rule, "equal or quantile")
                   ->check(CLI::IsMember({"equal", "quantile"}));
  }
  void resolve(const ConfigFile& cfg) {
    if (sigma2_opt) cfg.fallback(sigma2_opt, sigma2, "sigma2");
    cfg.fallback(depth_opt, depth, "depth");
    cfg.fallback(splits_opt, splits, "splits");
    cfg.fallback(min_leaf_opt, min_leaf, "min_leaf");
    cfg.fallback(groups_opt, groups, "groups");
    cfg.fallback(rule_opt, split_rule, "split_rule");
  }
  gaware::SearchConfig to_config() const {
    gaware::SearchConfig config;
    config.sigma2 = gaware::SigmaCost(sigma2);
    config.depth = depth;
    config.splits = splits;
    config.min_leaf = min_leaf;
    config.group_count = groups;
    config.split_rule = split_rule == "quantile" ? gaware::SplitRule::Quantile
                                                 : gaware::SplitRule::EqualSpaced;
    return config;
  }
  json to_json(bool with_sigma2 = true) const {
    json j{{"depth", depth},       {"splits", splits},         {"min_leaf", min_leaf},
           {"groups", groups},     {"split_rule", split_rule}};
    if (with_sigma2) j["sigma2"] = sigma2;
    return j;
  }
};

std::string strip_csv(const std::string& path) {
  if (path.size() > 4 && path.substr(path.size() - 4) == ".csv")
    return path.substr(0, path.size() - 4);
  return path;
}

void write_fit_report(const gaware::FitResult& fit, const gaware::EstimateTable& table,
                      const std::string& path) {
  std::ostringstream out;
  out << "type_id,leaf,label";
  for (const auto& name : table.outcome_names) out << ",prediction_" << name;
  out << "\n";
  for (const auto& row : table.rows) {
    const int leaf_idx = fit.tree.leaf_for(row.covariates);
    const auto& leaf = fit.tree.leaves[static_cast<std::size_t>(leaf_idx)];
    out << row.type_id << "," << leaf_idx << "," << leaf.label;
    for (int j = 0; j < table.num_outcomes(); ++j) {
      if (leaf.ignorance)
        out << ",IGNORANCE";
      else
        out << "," << gaware::format_double(leaf.prediction[j]);
    }
    out << "\n";
  }
  gaware::atomic_write(path, out.str());
}

int run(int argc, char** argv) {
  CLI::App app{"generalizability-aware prediction toolkit"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  int threads = 1;
  app.add_option("--threads", threads, "worker cap")->envname("GAWARE_THREADS");
  std::string config_path;
  app.add_option("--config", config_path, "JSON config mirroring flag names");
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "master seed")->envname("GAWARE_SEED");

  ConfigFile cfg;

  // ---- build-estimates ----
  auto* build = app.add_subcommand("build-estimates", "raw study CSV -> estimate table CSV");
  std::string build_input, build_out = "estimates.csv", estimator = "ipw", oracle_name = "ridge",
              keying_name = "cov-env";
  int folds = 2, match_size = 3, knn_k = 5;
  bool do_split = false, model_variance = false, no_variance = false;
  build->add_option("--input", build_input, "raw study CSV")->required();
  build->add_option("--out", build_out, "output table (or prefix with --split)");
  auto* est_opt = build->add_option("--estimator", estimator, "ipw|dr|match|param")
                      ->check(CLI::IsMember({"ipw", "dr", "match", "param"}));
  auto* folds_opt = build->add_option("--folds", folds, "cross-fitting folds");
  auto* match_opt = build->add_option("--match-size", match_size, "neighbours per group");
  build->add_flag("--split", do_split, "emit main/holdout halves");
  build->add_flag("--model-variance", model_variance, "smooth the parametric variance");
  build->add_flag("--no-variance", no_variance, "skip per-type variances");
  build->add_option("--oracle", oracle_name, "ridge|knn")
      ->check(CLI::IsMember({"ridge", "knn"}));
  build->add_option("--knn-k", knn_k, "neighbours for the knn oracle");
  build->add_option("--keying", keying_name, "cov-env|cov")
      ->check(CLI::IsMember({"cov-env", "cov"}));

  // ---- fit ----
  auto* fit_cmd = app.add_subcommand("fit", "fit a tree on an estimate table");
  std::string fit_input, fit_out = "model.json", fit_report = "report.csv";
  TreeFlags fit_flags;
  fit_cmd->add_option("--input", fit_input, "estimate table CSV")->required();
  fit_flags.attach(fit_cmd);
  fit_cmd->add_option("--out", fit_out, "model JSON");
  fit_cmd->add_option("--report", fit_report, "per-type report CSV");

  // ---- sweep ----
  auto* sweep_cmd = app.add_subcommand("sweep", "abstention frontier over a cost grid");
  std::string sweep_input, sweep_out = "frontier.csv", sweep_grid = "0.5:5.5:1.0";
  TreeFlags sweep_flags;
  sweep_cmd->add_option("--input", sweep_input, "estimate table CSV")->required();
  auto* sweep_grid_opt = sweep_cmd->add_option("--sigma2-grid", sweep_grid,
                                               "comma list or start:stop:step");
  sweep_flags.attach(sweep_cmd, /*with_sigma2=*/false);
  sweep_cmd->add_option("--out", sweep_out, "frontier CSV");

  // ---- infer ----
  auto* infer_cmd = app.add_subcommand("infer", "test candidate partitions on a split sample");
  std::string infer_main, infer_holdout, infer_candidates, infer_out = "tests.csv";
  double gamma = 0.1;
  TreeFlags infer_flags;
  infer_cmd->add_option("--main", infer_main, "main-half table CSV")->required();
  infer_cmd->add_option("--holdout", infer_holdout, "holdout-half table CSV")->required();
  infer_cmd->add_option("--candidates", infer_candidates, "directory of model JSON files")
      ->required();
  auto* gamma_opt = infer_cmd->add_option("--gamma", gamma, "family-wise level");
  infer_flags.attach(infer_cmd);
  infer_cmd->add_option("--out", infer_out, "test report CSV");

  // ---- forest ----
  auto* forest_cmd = app.add_subcommand("forest", "bagged trees and generalizability scores");
  std::string forest_input, forest_out = "forest.json", forest_report = "scores.csv";
  int tree_count = 100, vars_per_tree = 1;
  TreeFlags forest_flags;
  forest_cmd->add_option("--input", forest_input, "estimate table CSV")->required();
  auto* trees_opt = forest_cmd->add_option("--trees", tree_count, "number of trees");
  auto* vars_opt = forest_cmd->add_option("--vars", vars_per_tree, "variables per tree");
  forest_flags.attach(forest_cmd);
  forest_cmd->add_option("--out", forest_out, "forest JSON");
  forest_cmd->add_option("--report", forest_report, "per-type scores CSV");

  // ---- simulate ----
  auto* sim_cmd = app.add_subcommand("simulate", "calibrated contamination benchmark");
  std::string sim_scales = "0.1,0.5,1,2,3", sim_grid = "0.1,0.5,1,1.5,2", sim_out = "bench";
  int reps = 50, sim_n = 2000;
  TreeFlags sim_flags;
  sim_flags.depth = 2;
  sim_flags.splits = 19;
  sim_flags.min_leaf = 5;
  sim_cmd->add_option("--scales", sim_scales, "heavy-tail scales");
  auto* sim_grid_opt = sim_cmd->add_option("--sigma2-grid", sim_grid, "abstention cost grid");
  auto* reps_opt = sim_cmd->add_option("--reps", reps, "replications per scale");
  auto* n_opt = sim_cmd->add_option("--n", sim_n, "types per replication");
  sim_flags.attach(sim_cmd, /*with_sigma2=*/false);
  sim_cmd->add_option("--out", sim_out, "output prefix (CSV + JSON)");

  CLI11_PARSE(app, argc, argv);
  if (!config_path.empty()) cfg.load(config_path);
  cfg.fallback(seed_opt, seed, "seed");

  if (build->parsed()) {
    cfg.fallback(est_opt, estimator, "estimator");
    cfg.fallback(folds_opt, folds, "folds");
    cfg.fallback(match_opt, match_size, "match_size");

    ManifestWriter manifest;
    manifest.subcommand = "build-estimates";
    manifest.seed = seed;
    manifest.input(build_input);
    manifest.config = {{"estimator", estimator}, {"folds", folds},
                       {"match_size", match_size}, {"split", do_split},
                       {"model_variance", model_variance}, {"variance", !no_variance},
                       {"oracle", oracle_name}, {"keying", keying_name}};

    gaware::EstimatorSpec spec;
    spec.kind = estimator == "ipw"     ? gaware::EstimatorKind::Ipw
                : estimator == "dr"    ? gaware::EstimatorKind::DoublyRobust
                : estimator == "match" ? gaware::EstimatorKind::Matched
                                       : gaware::EstimatorKind::Parametric;
    spec.oracle = oracle_name == "knn" ? gaware::knn_oracle(knn_k) : gaware::ridge_cv_oracle();
    spec.folds = folds;
    spec.match_size = match_size;
    spec.model_variance = model_variance;
    spec.per_type_variance = !no_variance;
    spec.keying = keying_name == "cov" ? gaware::TypeKeying::CovariatesOnly
                                       : gaware::TypeKeying::CovariatesAndEnvironment;
    spec.seed = seed;

    const gaware::RawStudy study = gaware::load_raw_study(build_input);
    if (do_split) {
      const gaware::SplitPair pair = gaware::split_for_inference(study, spec, seed);
      const std::string base = strip_csv(build_out);
      gaware::save_estimate_table(pair.main, base + ".main.csv");
      gaware::save_estimate_table(pair.holdout, base + ".holdout.csv");
      for (const auto& excluded : pair.excluded_types)
        std::cerr << "excluded from split: " << excluded << "\n";
      manifest.write(base + ".main.csv");
    } else {
      const gaware::EstimateTable table = gaware::build_estimates(study, spec);
      gaware::save_estimate_table(table, build_out);
      for (const auto& note : table.provenance.notes) std::cerr << "note: " << note << "\n";
      manifest.write(build_out);
    }
    return 0;
  }

  if (fit_cmd->parsed()) {
    fit_flags.resolve(cfg);
    ManifestWriter manifest;
    manifest.subcommand = "fit";
    manifest.seed = seed;
    manifest.input(fit_input);
    manifest.config = fit_flags.to_json();

    const gaware::EstimateTable table = gaware::load_estimate_table(fit_input);
    const gaware::FitResult fit = gaware::fit_gaware_tree(table, fit_flags.to_config());
    gaware::save_tree(fit.tree, fit_out);
    write_fit_report(fit, table, fit_report);
    std::cout << "objective " << fit.breakdown.total << ", ignorance mass "
              << fit.breakdown.ignorance_mass << ", optimization error " << fit.epsilon << "\n";
    manifest.write(fit_out);
    return 0;
  }

  if (sweep_cmd->parsed()) {
    sweep_flags.resolve(cfg);
    cfg.fallback(sweep_grid_opt, sweep_grid, "sigma2_grid");
    ManifestWriter manifest;
    manifest.subcommand = "sweep";
    manifest.seed = seed;
    manifest.input(sweep_input);
    manifest.config = sweep_flags.to_json(false);
    manifest.config["sigma2_grid"] = sweep_grid;

    const gaware::EstimateTable table = gaware::load_estimate_table(sweep_input);
    const auto grid = parse_grid(sweep_grid);
    const auto rows = gaware::sigma_frontier(table, gaware::gaware_fitter(sweep_flags.to_config()),
                                             grid, sweep_flags.groups);
    std::ostringstream out;
    out << "sigma2,basin_mass,r_hat,w_hat,n_archetypes\n";
    for (const auto& row : rows) {
      if (!row.ok) {
        std::cerr << "sigma2 " << row.sigma2 << " failed: " << row.error << "\n";
        continue;
      }
      out << gaware::format_double(row.sigma2) << "," << gaware::format_double(row.ignorance_mass)
          << "," << gaware::format_double(row.r_hat) << "," << gaware::format_double(row.w_hat)
          << "," << row.archetype_count << "\n";
    }
    gaware::atomic_write(sweep_out, out.str());
    manifest.write(sweep_out);
    return 0;
  }

  if (infer_cmd->parsed()) {
    infer_flags.resolve(cfg);
    cfg.fallback(gamma_opt, gamma, "gamma");
    ManifestWriter manifest;
    manifest.subcommand = "infer";
    manifest.seed = seed;
    manifest.input(infer_main);
    manifest.input(infer_holdout);
    manifest.config = infer_flags.to_json();
    manifest.config["gamma"] = gamma;

    gaware::SplitPair pair;
    pair.main = gaware::load_estimate_table(infer_main);
    pair.holdout = gaware::load_estimate_table(infer_holdout);
    for (int i = 0; i < pair.main.num_types(); ++i)
      if (pair.holdout.find(pair.main.row(i).type_id) < 0)
        throw gaware::ValidationError("holdout table missing type '" +
                                      pair.main.row(i).type_id + "'");

    if (!fs::is_directory(infer_candidates))
      throw gaware::ValidationError("'" + infer_candidates + "' is not a directory");
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(infer_candidates))
      if (entry.path().extension() == ".json" &&
          entry.path().string().find(".manifest.") == std::string::npos)
        files.push_back(entry.path().string());
    std::sort(files.begin(), files.end());
    if (files.empty())
      throw gaware::ValidationError("no candidate models in '" + infer_candidates + "'");

    std::vector<gaware::Partition> candidates;
    for (const auto& file : files) {
      manifest.input(file);
      candidates.push_back(
          gaware::partition_from_tree(gaware::load_tree(file), pair.main));
    }

    const gaware::PruneResult result =
        gaware::prune_partition_set(pair, candidates, gamma, infer_flags.to_config());
    std::ostringstream out;
    out << "candidate,statistic,variance,critical_value,gamma_star,degenerate,decision\n";
    for (std::size_t i = 0; i < result.reports.size(); ++i) {
      const auto& rep = result.reports[i];
      out << fs::path(files[i]).filename().string() << ","
          << gaware::format_double(rep.statistic) << "," << gaware::format_double(rep.variance)
          << "," << gaware::format_double(rep.critical_value) << ","
          << gaware::format_double(rep.gamma_star) << "," << (rep.degenerate ? 1 : 0) << ","
          << (rep.retained ? "retained" : "rejected") << "\n";
    }
    gaware::atomic_write(infer_out, out.str());
    manifest.write(infer_out);
    return 0;
  }

  if (forest_cmd->parsed()) {
    forest_flags.resolve(cfg);
    cfg.fallback(trees_opt, tree_count, "trees");
    cfg.fallback(vars_opt, vars_per_tree, "vars");
    ManifestWriter manifest;
    manifest.subcommand = "forest";
    manifest.seed = seed;
    manifest.input(forest_input);
    manifest.config = forest_flags.to_json();
    manifest.config["trees"] = tree_count;
    manifest.config["vars"] = vars_per_tree;

    const gaware::EstimateTable table = gaware::load_estimate_table(forest_input);
    gaware::ForestOptions options;
    options.tree_count = tree_count;
    options.variables_per_tree = vars_per_tree;
    options.seed = seed;
    options.threads = threads;
    const gaware::ForestModel model = gaware::fit_forest(table, forest_flags.to_config(), options);
    gaware::save_forest(model, forest_out);

    std::ostringstream out;
    out << "type_id,score";
    for (const auto& name : table.outcome_names) out << ",prediction_" << name;
    out << "\n";
    for (const auto& entry : gaware::predict_with_scores(model, table)) {
      out << entry.type_id << "," << gaware::format_double(entry.score);
      for (int j = 0; j < table.num_outcomes(); ++j) {
        if (entry.prediction)
          out << "," << gaware::format_double((*entry.prediction)[j]);
        else
          out << ",IGNORANCE";
      }
      out << "\n";
    }
    gaware::atomic_write(forest_report, out.str());
    manifest.write(forest_out);
    return 0;
  }

  if (sim_cmd->parsed()) {
    sim_flags.resolve(cfg);
    cfg.fallback(sim_grid_opt, sim_grid, "sigma2_grid");
    cfg.fallback(reps_opt, reps, "reps");
    cfg.fallback(n_opt, sim_n, "n");
    ManifestWriter manifest;
    manifest.subcommand = "simulate";
    manifest.seed = seed;
    manifest.config = sim_flags.to_json(false);
    manifest.config["scales"] = sim_scales;
    manifest.config["sigma2_grid"] = sim_grid;
    manifest.config["reps"] = reps;
    manifest.config["n"] = sim_n;

    gaware::SimConfig config;
    config.num_types = sim_n;
    config.replications = reps;
    config.seed = seed;
    gaware::BenchMethods methods;
    methods.gaware_sigma2_grid = parse_grid(sim_grid);

    const gaware::BenchReport report = gaware::run_benchmark(
        config, parse_grid(sim_scales), methods, sim_flags.to_config(), threads);

    std::ostringstream rows;
    rows << "method,scale,rep,gen_error,basin_recall,basin_precision,basin_share,runtime_ms,"
            "failed\n";
    for (const auto& row : report.rows)
      rows << row.method << "," << gaware::format_double(row.scale) << "," << row.rep << ","
           << gaware::format_double(row.gen_error) << ","
           << gaware::format_double(row.basin_recall) << ","
           << gaware::format_double(row.basin_precision) << ","
           << gaware::format_double(row.basin_share) << ","
           << gaware::format_double(row.runtime_ms) << "," << (row.failed ? 1 : 0) << "\n";
    gaware::atomic_write(sim_out + ".csv", rows.str());

    json summary;
    summary["clip_events"] = report.clip_events;
    summary["summaries"] = json::array();
    for (const auto& s : report.summaries)
      summary["summaries"].push_back({{"method", s.method},
                                      {"scale", s.scale},
                                      {"median_gen_error", s.median_gen_error},
                                      {"median_recall", s.median_recall},
                                      {"median_precision", s.median_precision},
                                      {"median_share", s.median_share},
                                      {"failures", s.failures}});
    gaware::atomic_write(sim_out + ".json", summary.dump(2) + "\n");
    manifest.write(sim_out + ".csv");
    return 0;
  }

  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const gaware::ValidationError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  } catch (const std::exception& err) {
    std::cerr << "internal error: " << err.what() << "\n";
    return 2;
  }
}
