#ifndef VBSMC_CLI_HPP
#define VBSMC_CLI_HPP

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vbsmc/arma.hpp"
#include "vbsmc/config.hpp"
#include "vbsmc/csv.hpp"
#include "vbsmc/error.hpp"
#include "vbsmc/fgn.hpp"
#include "vbsmc/obs.hpp"
#include "vbsmc/rng.hpp"
#include "vbsmc/smc.hpp"
#include "vbsmc/var.hpp"
#include "vbsmc/variational.hpp"

namespace vbsmc::cli {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

struct OutputFile {
  std::string name;
  std::string content;
};

/// Commands compute every output in memory first; nothing touches the disk
/// until `write_outputs`, so a failing run leaves no partial files behind.
struct CommandResult {
  std::vector<OutputFile> files;
  std::string message;  ///< human-readable summary for stdout
};

inline void write_outputs(const std::string& dir, const std::vector<OutputFile>& files) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory '" + dir + "': " + ec.message());
  for (const auto& f : files) {
    const fs::path target = fs::path(dir) / f.name;
    const fs::path tmp = fs::path(dir) / (f.name + ".tmp");
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw DataError("cannot write '" + tmp.string() + "'");
      out << f.content;
      if (!out) throw DataError("write to '" + tmp.string() + "' failed");
    }
    fs::rename(tmp, target, ec);
    if (ec) throw DataError("cannot move output into '" + target.string() + "': " + ec.message());
  }
}

namespace detail {

inline std::vector<std::string> default_labels(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t k = 0; k < n; ++k) out.push_back("s" + std::to_string(k + 1));
  return out;
}

inline nlohmann::json model_json(const RunConfig& cfg) {
  nlohmann::json m;
  if (cfg.kind == ModelKind::arma) {
    m["kind"] = "arma";
    m["ar"] = cfg.arma->ar;
    m["ma"] = cfg.arma->ma;
  } else {
    m["kind"] = "var";
    nlohmann::json ws = nlohmann::json::array();
    for (const auto& w : cfg.var->weights) {
      nlohmann::json rows = nlohmann::json::array();
      for (Eigen::Index r = 0; r < w.rows(); ++r) {
        std::vector<double> row(static_cast<std::size_t>(w.cols()));
        for (Eigen::Index c = 0; c < w.cols(); ++c) row[static_cast<std::size_t>(c)] = w(r, c);
        rows.push_back(row);
      }
      ws.push_back(rows);
    }
    m["weights"] = ws;
  }
  const FgnSpec& spec = cfg.kind == ModelKind::arma ? cfg.arma->innovations : cfg.var->innovations;
  m["hurst"] = spec.hurst.value();
  m["sigma2"] = spec.sigma2;
  m["label"] = cfg.model_label();
  return m;
}

/// Run metadata. The worker count is deliberately absent: outputs must not
/// depend on it.
inline nlohmann::json run_json(const RunConfig& cfg) {
  nlohmann::json j;
  j["model"] = model_json(cfg);
  j["noise"] = {{"alpha", cfg.filter.channel.noise.alpha}, {"beta", cfg.filter.channel.noise.beta}};
  j["filter"] = {{"particles", cfg.filter.n_particles},
                 {"resampling", to_string(cfg.filter.resampling)},
                 {"ess_threshold", cfg.filter.ess_threshold ? nlohmann::json(*cfg.filter.ess_threshold)
                                                            : nlohmann::json(nullptr)}};
  j["seed"] = cfg.seed;
  j["label"] = cfg.model_label();
  return j;
}

inline std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

}  // namespace detail

/// Simulates latent states and observations.
/// ARMA: latent.csv (t,x,u), observations.csv (t,z), simulate.json.
/// VAR:  latent.csv and observations.csv in the dataset schema; when
///       simulate.mask_fraction > 0 the masked cells are empty and the full
///       table goes to observations_complete.csv.
inline CommandResult cmd_simulate(const RunConfig& cfg) {
  using csv::format_double;
  CommandResult result;
  const std::size_t steps = cfg.horizon;
  Rng inn_rng = make_stream(cfg.seed, StreamTag::innovations);
  Rng obs_rng = make_stream(cfg.seed, StreamTag::observation_noise);
  nlohmann::json meta = detail::run_json(cfg);
  meta["horizon"] = steps;

  if (cfg.kind == ModelKind::arma) {
    const FgnSampler sampler(steps, cfg.arma->innovations);
    const auto u = sampler.draw(inn_rng);
    const auto x = arma_filter_innovations(*cfg.arma, u);
    std::string latent = "t,x,u\n";
    std::string obs = "t,z\n";
    for (std::size_t t = 0; t < steps; ++t) {
      const double z = cfg.filter.channel.sample(x[t], obs_rng);
      latent += std::to_string(t + 1) + "," + format_double(x[t]) + "," + format_double(u[t]) + "\n";
      obs += std::to_string(t + 1) + "," + format_double(z) + "\n";
    }
    meta["jitter"] = sampler.jitter();
    result.files = {{"latent.csv", latent}, {"observations.csv", obs}, {"simulate.json", detail::dump(meta)}};
  } else {
    const VarModel& model = *cfg.var;
    const auto labels = cfg.labels.empty() ? detail::default_labels(model.dim()) : cfg.labels;
    const Matrix x = simulate_var(model, steps, inn_rng);
    Matrix z(x.rows(), x.cols());
    for (Eigen::Index t = 0; t < x.cols(); ++t)
      for (Eigen::Index k = 0; k < x.rows(); ++k) z(k, t) = cfg.filter.channel.sample(x(k, t), obs_rng);
    Dataset data = Dataset::fully_observed(z, labels);
    result.files.push_back({"latent.csv", csv::write_matrix(x, labels)});
    if (cfg.mask_fraction > 0.0) {
      Rng mask_rng = make_stream(cfg.seed, StreamTag::masking);
      meta["masked_cells"] = mask_random_cells(data, cfg.mask_fraction, mask_rng);
      result.files.push_back({"observations_complete.csv", csv::write_matrix(z, labels)});
    }
    result.files.push_back({"observations.csv", csv::write_dataset(data)});
    meta["jitter"] = FgnSampler(steps, model.innovations).jitter();
    meta["labels"] = labels;
    result.files.push_back({"simulate.json", detail::dump(meta)});
  }
  result.message = "simulated " + std::to_string(steps) + " steps of " + cfg.model_label();
  return result;
}

/// Report table: t,estimate[,truth,rmse],ess,resampled_count.
inline std::string report_csv(const FilterReport& r) {
  using csv::format_double;
  const bool with_truth = r.truth.has_value();
  std::string out = with_truth ? "t,estimate,truth,rmse,ess,resampled_count\n" : "t,estimate,ess,resampled_count\n";
  for (std::size_t t = 0; t < r.steps(); ++t) {
    out += std::to_string(t + 1) + "," + format_double(r.estimates[t]);
    if (with_truth) out += "," + format_double((*r.truth)[t]) + "," + format_double((*r.rmse_trace)[t]);
    out += "," + format_double(r.ess_trace[t]) + "," + std::to_string(r.resample_counts[t]) + "\n";
  }
  return out;
}

inline nlohmann::json fitness_json(const RunConfig& cfg, std::span<const double> z) {
  try {
    const VariationalPosterior q(state_covariance(*cfg.arma, z.size()), cfg.filter.channel.noise, cfg.residual_sign);
    Rng rng = make_stream(cfg.seed, StreamTag::fitness);
    const FitnessEstimate f = fitness_estimate(q, cfg.filter.channel, z, cfg.fitness_samples, rng);
    return {{"value", f.value},
            {"standard_error", f.standard_error},
            {"expected_log_ratio", f.expected_log_ratio},
            {"kl_noise", f.kl_noise},
            {"samples", f.samples},
            {"residual_sign", cfg.residual_sign == ResidualSign::as_printed ? "as_printed" : "likelihood"}};
  } catch (const NumericError& e) {
    // The fitness is a diagnostic; its failure is reported, not fatal.
    return {{"error", e.what()}};
  }
}

/// Filters an observation series (t,z) with the configured ARMA prior.
/// Writes report.csv and the report.json sidecar.
inline CommandResult cmd_filter(const RunConfig& cfg) {
  if (cfg.kind != ModelKind::arma) throw ConfigError("filter needs an ARMA model; use impute for VAR datasets");
  if (!cfg.observations_path) throw ConfigError("filter needs data.observations (or --observations)");
  const auto z = csv::read_observations(*cfg.observations_path);
  std::optional<std::vector<double>> truth;
  if (cfg.truth_path) truth = csv::read_series(*cfg.truth_path, "x");
  const FilterReport report =
      truth ? run_filter(*cfg.arma, cfg.filter, z, std::span<const double>(*truth)) : run_filter(*cfg.arma, cfg.filter, z);

  nlohmann::json meta = detail::run_json(cfg);
  meta["steps"] = report.steps();
  meta["has_truth"] = truth.has_value();
  if (const auto rmse = report.final_rmse()) meta["final_rmse"] = *rmse;
  meta["mean_ess"] = pairwise_sum(report.ess_trace) / static_cast<double>(report.steps());
  std::size_t total = 0;
  for (auto c : report.resample_counts) total += c;
  meta["total_resampled"] = total;
  if (cfg.fitness) meta["fitness"] = fitness_json(cfg, z);

  CommandResult result;
  result.files = {{"report.csv", report_csv(report)}, {"report.json", detail::dump(meta)}};
  result.message = "filtered " + std::to_string(report.steps()) + " steps";
  if (const auto rmse = report.final_rmse()) result.message += ", final RMSE " + csv::format_double(*rmse);
  return result;
}

struct EvaluationRow {
  std::string model;
  std::size_t runs = 0;
  std::optional<double> median, q1, q3;
  double mean_ess = 0.0;
  double mean_resampled = 0.0;
};

/// Linear-interpolation quantile of sorted data.
inline double quantile(const std::vector<double>& sorted, double p) {
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Aggregates report CSVs (grouped by the model label in their JSON
/// sidecars) into summary.csv: median and IQR of the final RMSE, mean ESS,
/// mean total resampled count per run.
inline CommandResult cmd_evaluate(const std::vector<std::string>& report_paths) {
  if (report_paths.empty()) throw ConfigError("evaluate needs at least one report file");
  struct Run {
    std::optional<double> final_rmse;
    double mean_ess;
    double resampled;
  };
  std::map<std::string, std::vector<Run>> groups;
  std::vector<std::string> schema;
  for (const auto& path : report_paths) {
    const csv::Table table = csv::read(path);
    if (schema.empty()) {
      schema = table.header;
    } else if (table.header != schema) {
      throw DataError(path + ": report columns (" + csv::join(table.header) + ") differ from the first report (" +
                      csv::join(schema) + ")");
    }
    const auto ess_col = table.column("ess");
    const auto count_col = table.column("resampled_count");
    if (!ess_col || !count_col || !table.column("estimate") || table.rows.empty()) {
      throw DataError(path + ": not a filter report");
    }
    Run run{};
    std::vector<double> ess_values;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      ess_values.push_back(csv::parse_number(table, r, *ess_col));
      run.resampled += csv::parse_number(table, r, *count_col);
    }
    run.mean_ess = pairwise_sum(ess_values) / static_cast<double>(ess_values.size());
    if (const auto rmse_col = table.column("rmse")) run.final_rmse = csv::parse_number(table, table.rows.size() - 1, *rmse_col);

    std::string label = std::filesystem::path(path).stem().string();
    const auto sidecar = std::filesystem::path(path).replace_extension(".json");
    if (std::filesystem::exists(sidecar)) {
      std::ifstream in(sidecar);
      try {
        const auto meta = nlohmann::json::parse(in);
        if (meta.contains("label")) label = meta.at("label").get<std::string>();
      } catch (const nlohmann::json::exception& e) {
        throw DataError(sidecar.string() + ": " + e.what());
      }
    }
    groups[label].push_back(run);
  }

  std::vector<EvaluationRow> rows;
  for (const auto& [model, runs] : groups) {
    EvaluationRow row;
    row.model = model;
    row.runs = runs.size();
    std::vector<double> rmse;
    for (const auto& r : runs) {
      if (r.final_rmse) rmse.push_back(*r.final_rmse);
      row.mean_ess += r.mean_ess / static_cast<double>(runs.size());
      row.mean_resampled += r.resampled / static_cast<double>(runs.size());
    }
    if (!rmse.empty()) {
      std::sort(rmse.begin(), rmse.end());
      row.median = quantile(rmse, 0.5);
      row.q1 = quantile(rmse, 0.25);
      row.q3 = quantile(rmse, 0.75);
    }
    rows.push_back(row);
  }

  using csv::format_double;
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string("NA"); };
  std::string out = "model,runs,final_rmse_median,final_rmse_q1,final_rmse_q3,final_rmse_iqr,mean_ess,mean_resampled\n";
  std::string text;
  char line[256];
  std::snprintf(line, sizeof line, "%-14s %5s %12s %12s %10s %12s\n", "model", "runs", "rmse_median", "rmse_iqr",
                "mean_ess", "resampled");
  text += line;
  for (const auto& r : rows) {
    const std::optional<double> iqr = r.median ? std::optional<double>(*r.q3 - *r.q1) : std::nullopt;
    out += csv::quote(r.model) + "," + std::to_string(r.runs) + "," + opt(r.median) + "," + opt(r.q1) + "," + opt(r.q3) + "," +
           opt(iqr) + "," + format_double(r.mean_ess) + "," + format_double(r.mean_resampled) + "\n";
    std::snprintf(line, sizeof line, "%-14s %5zu %12s %12s %10.2f %12.1f\n", r.model.c_str(), r.runs,
                  r.median ? std::to_string(*r.median).c_str() : "NA", iqr ? std::to_string(*iqr).c_str() : "NA",
                  r.mean_ess, r.mean_resampled);
    text += line;
  }
  return {{{"summary.csv", out}}, text};
}

/// Imputes the masked cells of a dataset CSV with the configured VAR prior.
/// Writes imputed.csv, impute_report.csv and impute_report.json. With
/// data.dataset_truth (complete observation table) the JSON carries the
/// imputed-cell RMSE next to the per-series-mean baseline; with data.truth
/// (latent table) it carries per-series state RMSE.
inline CommandResult cmd_impute(const RunConfig& cfg) {
  if (cfg.kind != ModelKind::var) throw ConfigError("impute needs a VAR model (model.kind = \"var\")");
  if (!cfg.dataset_path) throw ConfigError("impute needs data.dataset (or --data)");
  const Dataset data = csv::read_dataset(*cfg.dataset_path);
  if (!cfg.labels.empty() && cfg.labels != data.labels) {
    throw ConfigError("config field 'model.labels' (" + csv::join(cfg.labels) + ") does not match dataset header (" +
                      csv::join(data.labels) + ")");
  }
  if (data.dim() != cfg.var->dim()) {
    throw ConfigError("model has dimension " + std::to_string(cfg.var->dim()) + " but dataset has " +
                      std::to_string(data.dim()) + " series");
  }
  std::optional<Matrix> latent;
  if (cfg.truth_path) latent = csv::read_matrix(*cfg.truth_path, data.labels);
  const auto reports = filter_dataset(*cfg.var, data, cfg.filter, latent);
  const Dataset imputed = impute(reports, data);

  using csv::format_double;
  std::vector<std::string> header{"t"};
  for (const auto& l : data.labels) {
    header.push_back(l + "_estimate");
    header.push_back(l + "_predicted");
  }
  header.push_back("ess");
  header.push_back("resampled_count");
  std::string report = csv::join(header) + "\n";
  for (std::size_t t = 0; t < data.steps(); ++t) {
    std::vector<std::string> cells{std::to_string(t + 1)};
    for (const auto& r : reports) {
      cells.push_back(format_double(r.estimates[t]));
      cells.push_back(format_double(r.predicted_observations[t]));
    }
    cells.push_back(format_double(reports.front().ess_trace[t]));
    cells.push_back(std::to_string(reports.front().resample_counts[t]));
    report += csv::join(cells) + "\n";
  }

  nlohmann::json meta = detail::run_json(cfg);
  meta["labels"] = data.labels;
  meta["masked_cells"] = static_cast<std::size_t>(data.missing.count());
  std::string message = "imputed " + std::to_string(data.missing.count()) + " cells";
  if (cfg.dataset_truth_path) {
    const Matrix complete = csv::read_matrix(*cfg.dataset_truth_path, data.labels);
    if (complete.cols() != data.series.cols()) throw DataError("dataset_truth horizon does not match dataset");
    const ImputationScore s = score_imputation(data, imputed, complete);
    meta["imputed_rmse"] = s.rmse;
    meta["mean_imputation_rmse"] = s.baseline_rmse;
    message += ", RMSE " + format_double(s.rmse) + " (mean imputation " + format_double(s.baseline_rmse) + ")";
  }
  if (latent) {
    nlohmann::json per_series;
    for (const auto& r : reports) per_series[r.label] = *r.final_rmse();
    meta["final_state_rmse"] = per_series;
  }
  CommandResult result;
  result.files = {{"imputed.csv", csv::write_dataset(imputed)},
                  {"impute_report.csv", report},
                  {"impute_report.json", detail::dump(meta)}};
  result.message = message;
  return result;
}

}  // namespace vbsmc::cli

#endif
