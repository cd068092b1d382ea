#include "gaware/simbench.hpp"

#include "gaware/parallel.hpp"
#include "gaware/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <tuple>

namespace gaware {

namespace {

constexpr double kEffectClip = 1e6;
constexpr double kNoAbstentionSigma2 = 1e9;

std::string format_sigma(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", value);
  return buf;
}

double fractional(double x) { return x - std::floor(x); }

/// Archetype region of a type by its x1 coordinate.
int region_of(double x1, int regions) {
  int k = static_cast<int>(x1 * regions);
  return std::min(std::max(k, 0), regions - 1);
}

}  // namespace

void validate_sim_config(const SimConfig& config) {
  if (config.num_types < 10) throw ValidationError("simulation needs at least 10 types");
  if (!(config.basin_fraction > 0.0 && config.basin_fraction < 1.0))
    throw ValidationError("basin fraction must lie in (0,1)");
  if (!(config.cauchy_scale > 0.0)) throw ValidationError("heavy-tail scale must be positive");
  if (config.archetype_means.empty()) throw ValidationError("need at least one archetype mean");
  if (!(config.treat_prob > 0.0 && config.treat_prob < 1.0))
    throw ValidationError("treatment probability must lie in (0,1)");
  if (config.units_per_type < 2)
    throw ValidationError("per-type variance needs at least 2 units per type");
  if (config.replications < 1) throw ValidationError("need at least one replication");
}

DgpDraw generate_dgp(const SimConfig& config, std::uint64_t rep_seed) {
  validate_sim_config(config);
  const int n = config.num_types;
  const int regions = static_cast<int>(config.archetype_means.size());

  // Fixed design: x1 an even grid, x2 a low-discrepancy decoy. The basin is
  // the high-x2 part of a stripe around x1 = 0.5, sized so it holds the
  // requested fraction of types.
  const int basin_count = std::max(1, static_cast<int>(std::lround(config.basin_fraction * n)));
  const double stripe_half_width = std::min(0.25, 1.25 * config.basin_fraction);

  std::vector<double> x1(static_cast<std::size_t>(n)), x2(static_cast<std::size_t>(n));
  std::vector<int> stripe;
  for (int i = 0; i < n; ++i) {
    x1[static_cast<std::size_t>(i)] = (i + 0.5) / n;
    x2[static_cast<std::size_t>(i)] = fractional(0.5 + 0.6180339887498949 * (i + 1));
    if (std::abs(x1[static_cast<std::size_t>(i)] - 0.5) < stripe_half_width)
      stripe.push_back(i);
  }
  if (static_cast<int>(stripe.size()) <= basin_count)
    throw ValidationError("basin fraction too large for the stripe design");

  // basin = stripe types with the largest x2
  std::vector<int> by_x2 = stripe;
  std::sort(by_x2.begin(), by_x2.end(), [&](int a, int b) {
    return x2[static_cast<std::size_t>(a)] > x2[static_cast<std::size_t>(b)];
  });
  std::vector<char> in_basin(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < basin_count; ++i) in_basin[static_cast<std::size_t>(by_x2[i])] = 1;

  DgpDraw draw;
  draw.in_basin = in_basin;
  Rng rng(rep_seed);

  for (int i = 0; i < n; ++i) {
    Vector cov(2);
    cov << x1[static_cast<std::size_t>(i)], x2[static_cast<std::size_t>(i)];
    draw.type_covariates.push_back(cov);

    const int region = region_of(x1[static_cast<std::size_t>(i)], regions);
    double effect = config.archetype_means[static_cast<std::size_t>(region)];
    if (in_basin[static_cast<std::size_t>(i)]) {
      const double center = config.cauchy_center.value_or(effect);
      effect = rng.cauchy(center, config.cauchy_scale);
      if (std::abs(effect) > kEffectClip) {
        effect = std::copysign(kEffectClip, effect);
        ++draw.clip_events;
      }
    }
    draw.truth.push_back(effect);
  }

  draw.study.outcome_names = {"y"};
  draw.study.covariate_names = {"x1", "x2"};
  for (int i = 0; i < n; ++i) {
    for (int u = 0; u < config.units_per_type; ++u) {
      StudyUnit unit;
      unit.covariates = draw.type_covariates[static_cast<std::size_t>(i)];
      unit.environment = "0";
      unit.propensity = config.treat_prob;
      unit.treatment = rng.bernoulli(config.treat_prob) ? 1 : 0;
      const double base = rng.normal(0.0, config.outcome_noise_sd);
      unit.outcomes = Vector::Constant(1, unit.treatment
                                              ? draw.truth[static_cast<std::size_t>(i)] + base
                                              : base);
      draw.study.units.push_back(std::move(unit));
    }
  }
  return draw;
}

AlignedTruth align_truth(const DgpDraw& draw, const EstimateTable& table) {
  std::map<std::pair<double, double>, int> by_cov;
  for (std::size_t i = 0; i < draw.type_covariates.size(); ++i)
    by_cov[{draw.type_covariates[i][0], draw.type_covariates[i][1]}] = static_cast<int>(i);

  AlignedTruth aligned;
  for (const auto& row : table.rows) {
    auto it = by_cov.find({row.covariates[0], row.covariates[1]});
    if (it == by_cov.end())
      throw ValidationError("table row '" + row.type_id + "' does not match any simulated type");
    aligned.truth.push_back(draw.truth[static_cast<std::size_t>(it->second)]);
    aligned.in_basin.push_back(draw.in_basin[static_cast<std::size_t>(it->second)]);
  }
  return aligned;
}

std::map<std::string, Vector> shrinkage_baseline(
    const EstimateTable& table, const TreeModel& plain_tree,
    const std::optional<std::map<std::string, double>>& known_variance) {
  const int q = table.num_outcomes();

  // per-leaf weighted moments of the estimates
  std::map<int, double> mass;
  std::map<int, Vector> mean, second, noise;
  std::vector<int> leaf_of(table.rows.size());
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const TypeRow& row = table.rows[i];
    const int leaf = plain_tree.leaf_for(row.covariates);
    leaf_of[i] = leaf;
    mass[leaf] += row.weight;
    auto& m = mean.try_emplace(leaf, Vector::Zero(q)).first->second;
    auto& s = second.try_emplace(leaf, Vector::Zero(q)).first->second;
    auto& h = noise.try_emplace(leaf, Vector::Zero(q)).first->second;
    m += row.weight * row.phi_hat;
    s += row.weight * row.phi_hat.array().square().matrix();
    if (known_variance) {
      h += row.weight * Vector::Constant(q, known_variance->at(row.type_id));
    } else {
      h += row.weight * row.eta2_hat;
    }
  }
  std::map<int, Vector> prior_var;
  for (auto& [leaf, m] : mean) {
    m /= mass[leaf];
    const Vector marginal = second[leaf] / mass[leaf] - m.array().square().matrix();
    prior_var[leaf] = (marginal - noise[leaf] / mass[leaf]).cwiseMax(0.0);
  }

  std::map<std::string, Vector> predictions;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const TypeRow& row = table.rows[i];
    const int leaf = leaf_of[i];
    Vector pred(q);
    for (int j = 0; j < q; ++j) {
      const double v = prior_var[leaf][j];
      const double noise_var =
          known_variance ? known_variance->at(row.type_id) : row.eta2_hat[j];
      if (noise_var <= 0.0) {
        pred[j] = row.phi_hat[j];
      } else if (v <= 0.0) {
        pred[j] = mean[leaf][j];
      } else {
        pred[j] = (v * row.phi_hat[j] + noise_var * mean[leaf][j]) / (v + noise_var);
      }
    }
    predictions[row.type_id] = std::move(pred);
  }
  return predictions;
}

double generalizable_set_error(const std::vector<double>& predictions,
                               const std::vector<char>& predicted, const AlignedTruth& aligned) {
  double sse = 0.0;
  long count = 0;
  for (std::size_t i = 0; i < aligned.truth.size(); ++i) {
    if (aligned.in_basin[i] || !predicted[i]) continue;
    const double err = predictions[i] - aligned.truth[i];
    sse += err * err;
    ++count;
  }
  return count ? sse / static_cast<double>(count) : std::nan("");
}

double generalizable_set_error_vectorized(const std::vector<double>& predictions,
                                          const std::vector<char>& predicted,
                                          const AlignedTruth& aligned) {
  const auto n = static_cast<Eigen::Index>(aligned.truth.size());
  Eigen::ArrayXd pred(n), truth(n), mask(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto s = static_cast<std::size_t>(i);
    pred[i] = predicted[s] ? predictions[s] : 0.0;
    truth[i] = predicted[s] ? aligned.truth[s] : 0.0;
    mask[i] = (!aligned.in_basin[s] && predicted[s]) ? 1.0 : 0.0;
  }
  const double count = mask.sum();
  return count > 0.0 ? (mask * (pred - truth).square()).sum() / count : std::nan("");
}

double median(std::vector<double> values) {
  if (values.empty()) return std::nan("");
  std::sort(values.begin(), values.end());
  const std::size_t m = values.size();
  return m % 2 ? values[m / 2] : 0.5 * (values[m / 2 - 1] + values[m / 2]);
}

namespace {

struct MethodOutcome {
  std::vector<double> predictions;  // per table row
  std::vector<char> predicted;
};

BenchRow evaluate(const std::string& method, double scale, int rep, const MethodOutcome& out,
                  const AlignedTruth& aligned, double runtime_ms) {
  BenchRow row;
  row.method = method;
  row.scale = scale;
  row.rep = rep;
  row.runtime_ms = runtime_ms;
  row.gen_error = generalizable_set_error(out.predictions, out.predicted, aligned);

  long basin_total = 0, flagged = 0, both = 0;
  for (std::size_t i = 0; i < aligned.in_basin.size(); ++i) {
    if (aligned.in_basin[i]) ++basin_total;
    if (!out.predicted[i]) {
      ++flagged;
      if (aligned.in_basin[i]) ++both;
    }
  }
  row.basin_recall = basin_total ? static_cast<double>(both) / basin_total : 0.0;
  row.basin_precision = flagged ? static_cast<double>(both) / flagged : 1.0;
  row.basin_share = static_cast<double>(flagged) / static_cast<double>(aligned.in_basin.size());
  return row;
}

MethodOutcome tree_outcome(const EstimateTable& table, const FitResult& fit) {
  MethodOutcome out;
  out.predictions.resize(table.rows.size(), 0.0);
  out.predicted.resize(table.rows.size(), 0);
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const TreeLeaf& leaf =
        fit.tree.leaves[static_cast<std::size_t>(fit.tree.leaf_for(table.rows[i].covariates))];
    if (!leaf.ignorance) {
      out.predicted[i] = 1;
      out.predictions[i] = leaf.prediction[0];
    }
  }
  return out;
}

MethodOutcome map_outcome(const EstimateTable& table,
                          const std::map<std::string, Vector>& predictions) {
  MethodOutcome out;
  out.predictions.resize(table.rows.size(), 0.0);
  out.predicted.assign(table.rows.size(), 1);
  for (std::size_t i = 0; i < table.rows.size(); ++i)
    out.predictions[i] = predictions.at(table.rows[i].type_id)[0];
  return out;
}

}  // namespace

BenchReport run_benchmark(const SimConfig& config, const std::vector<double>& scales,
                          const BenchMethods& methods, const SearchConfig& tree_config,
                          int threads) {
  validate_sim_config(config);
  if (scales.empty()) throw ValidationError("need at least one scale");
  if (methods.gaware_sigma2_grid.empty() && !methods.plain_tree && !methods.eb_known &&
      !methods.eb_estimated)
    throw ValidationError("no methods selected");

  BenchReport report;
  std::mutex merge;
  const int total = static_cast<int>(scales.size()) * config.replications;

  parallel_for(total, threads, [&](int job) {
    const int scale_idx = job / config.replications;
    const int rep = job % config.replications;
    const double scale = scales[static_cast<std::size_t>(scale_idx)];

    SimConfig rep_config = config;
    rep_config.cauchy_scale = scale;
    const DgpDraw draw = generate_dgp(
        rep_config, derive_seed(config.seed, static_cast<std::uint64_t>(scale_idx),
                                static_cast<std::uint64_t>(rep)));
    const EstimateTable table = ipw_pseudo_outcomes(draw.study);
    const AlignedTruth aligned = align_truth(draw, table);

    // known sampling variance of each type's mean pseudo-outcome
    std::map<std::string, double> known_var;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
      const double phi = aligned.truth[i];
      const double noise2 = config.outcome_noise_sd * config.outcome_noise_sd;
      const double second_moment = (phi * phi + noise2) / config.treat_prob +
                                   noise2 / (1.0 - config.treat_prob);
      known_var[table.rows[i].type_id] =
          (second_moment - phi * phi) / config.units_per_type;
    }

    std::vector<BenchRow> local;
    auto timed = [&](const std::string& name, auto&& fn) {
      const auto start = std::chrono::steady_clock::now();
      try {
        const MethodOutcome out = fn();
        const double ms = std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - start)
                              .count();
        local.push_back(evaluate(name, scale, rep, out, aligned, ms));
      } catch (const std::exception&) {
        BenchRow row;
        row.method = name;
        row.scale = scale;
        row.rep = rep;
        row.failed = true;
        row.gen_error = std::nan("");
        local.push_back(row);
      }
    };

    SearchConfig cfg = tree_config;
    for (double s2 : methods.gaware_sigma2_grid) {
      cfg.sigma2 = SigmaCost(s2);
      timed("gaware@" + format_sigma(s2),
            [&] { return tree_outcome(table, fit_gaware_tree(table, cfg)); });
    }

    FitResult plain;
    bool have_plain = false;
    if (methods.plain_tree || methods.eb_known || methods.eb_estimated) {
      cfg.sigma2 = SigmaCost(kNoAbstentionSigma2);
      try {
        plain = fit_gaware_tree(table, cfg);
        have_plain = true;
      } catch (const std::exception&) {
        have_plain = false;
      }
    }
    if (methods.plain_tree)
      timed("plain_tree", [&]() -> MethodOutcome {
        if (!have_plain) throw ValidationError("plain tree fit failed");
        return tree_outcome(table, plain);
      });
    if (methods.eb_known)
      timed("eb_known", [&]() -> MethodOutcome {
        if (!have_plain) throw ValidationError("plain tree fit failed");
        return map_outcome(table, shrinkage_baseline(table, plain.tree, known_var));
      });
    if (methods.eb_estimated)
      timed("eb_estimated", [&]() -> MethodOutcome {
        if (!have_plain) throw ValidationError("plain tree fit failed");
        return map_outcome(table, shrinkage_baseline(table, plain.tree));
      });

    std::lock_guard<std::mutex> lock(merge);
    report.clip_events += draw.clip_events;
    for (auto& row : local) report.rows.push_back(std::move(row));
  });

  // deterministic order regardless of scheduling
  std::sort(report.rows.begin(), report.rows.end(), [](const BenchRow& a, const BenchRow& b) {
    return std::tie(a.scale, a.method, a.rep) < std::tie(b.scale, b.method, b.rep);
  });

  std::map<std::pair<double, std::string>, std::vector<const BenchRow*>> grouped;
  for (const auto& row : report.rows) grouped[{row.scale, row.method}].push_back(&row);
  for (const auto& [key, rows] : grouped) {
    BenchSummary summary;
    summary.scale = key.first;
    summary.method = key.second;
    std::vector<double> err, recall, precision, share;
    for (const BenchRow* row : rows) {
      if (row->failed) {
        ++summary.failures;
        continue;
      }
      if (!std::isnan(row->gen_error)) err.push_back(row->gen_error);
      recall.push_back(row->basin_recall);
      precision.push_back(row->basin_precision);
      share.push_back(row->basin_share);
    }
    summary.median_gen_error = median(err);
    summary.median_recall = median(recall);
    summary.median_precision = median(precision);
    summary.median_share = median(share);
    report.summaries.push_back(std::move(summary));
  }
  return report;
}

}  // namespace gaware
