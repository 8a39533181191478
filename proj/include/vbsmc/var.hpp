#ifndef VBSMC_VAR_HPP
#define VBSMC_VAR_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vbsmc/error.hpp"
#include "vbsmc/fgn.hpp"
#include "vbsmc/linalg.hpp"
#include "vbsmc/rng.hpp"
#include "vbsmc/smc.hpp"

namespace vbsmc {

/// VAR(k): x_t = sum_{i=1..k} W_i x_{t-i} + u_t. Each component of u is an
/// independent fGn series sharing one Hurst exponent and variance.
struct VarModel {
  std::vector<Matrix> weights;
  FgnSpec innovations;

  VarModel(std::vector<Matrix> w, FgnSpec spec) : weights(std::move(w)), innovations(spec) {
    if (weights.empty()) throw ConfigError("VAR order must be >= 1");
    const Eigen::Index n = weights.front().rows();
    if (n == 0) throw ConfigError("VAR dimension must be >= 1");
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (weights[i].rows() != n || weights[i].cols() != n) {
        throw ConfigError("VAR weight matrix " + std::to_string(i + 1) + " is not " + std::to_string(n) +
                          "x" + std::to_string(n));
      }
      if (!weights[i].allFinite()) throw ConfigError("VAR weights must be finite");
    }
  }

  std::size_t order() const noexcept { return weights.size(); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(weights.front().rows()); }
  std::string label() const {
    return "VAR(" + std::to_string(order()) + ")x" + std::to_string(dim());
  }
};

namespace detail {

/// sum_i W_i x_{t-i}, component k; `states` is time-major with `n` columns.
inline double var_drift(const VarModel& model, std::span<const double> states, std::size_t t, std::size_t k) {
  const std::size_t n = model.dim();
  double acc = 0.0;
  for (std::size_t i = 1; i <= model.order() && i <= t; ++i) {
    const Matrix& w = model.weights[i - 1];
    const std::size_t base = (t - i) * n;
    for (std::size_t j = 0; j < n; ++j)
      acc += w(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) * states[base + j];
  }
  return acc;
}

}  // namespace detail

/// Latent n x T matrix under zero initial conditions.
inline Matrix simulate_var(const VarModel& model, std::size_t t, Rng& rng) {
  if (t == 0) throw ConfigError("simulation horizon must be >= 1");
  const std::size_t n = model.dim();
  FgnSampler sampler(t, model.innovations);
  std::vector<double> u(n * t);
  for (std::size_t k = 0; k < n; ++k) {
    const auto series = sampler.draw(rng);
    for (std::size_t s = 0; s < t; ++s) u[s * n + k] = series[s];
  }
  std::vector<double> x(n * t, 0.0);
  for (std::size_t s = 0; s < t; ++s)
    for (std::size_t k = 0; k < n; ++k) x[s * n + k] = detail::var_drift(model, x, s, k) + u[s * n + k];
  Matrix out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(t));
  for (std::size_t s = 0; s < t; ++s)
    for (std::size_t k = 0; k < n; ++k)
      out(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(s)) = x[s * n + k];
  return out;
}

/// Multivariate VAR prior for the particle filter.
class VarProcess {
 public:
  explicit VarProcess(VarModel model) : model_(std::move(model)), predictor_(model_.innovations) {}

  std::size_t dim() const noexcept { return model_.dim(); }
  void prepare(std::size_t t) { predictor_.extend_to(t); }

  void advance(std::span<const double> states, std::span<const double> innovations, std::size_t t,
               std::span<double> state_out, std::span<double> innovation_out, Rng& rng) const {
    const std::size_t n = dim();
    for (std::size_t k = 0; k < n; ++k) {
      const ConditionalGaussian c =
          t == 0 ? predictor_.conditional({}) : predictor_.conditional_strided(innovations.subspan(k), n, t);
      const double u = c.mean + std::sqrt(c.variance) * standard_normal(rng);
      innovation_out[k] = u;
      state_out[k] = detail::var_drift(model_, states, t, k) + u;
    }
  }

 private:
  VarModel model_;
  FgnPredictor predictor_;
};

/// n series over T steps with a missing-value mask.
struct Dataset {
  Matrix series;                                          ///< n x T
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> missing;  ///< n x T
  std::vector<std::string> labels;

  std::size_t dim() const noexcept { return static_cast<std::size_t>(series.rows()); }
  std::size_t steps() const noexcept { return static_cast<std::size_t>(series.cols()); }

  void validate() const {
    if (series.rows() == 0 || series.cols() == 0) throw DataError("dataset is empty");
    if (missing.rows() != series.rows() || missing.cols() != series.cols()) {
      throw DataError("dataset mask shape does not match series shape");
    }
    if (labels.size() != dim()) throw DataError("dataset needs one label per series");
    for (Eigen::Index k = 0; k < series.rows(); ++k)
      for (Eigen::Index t = 0; t < series.cols(); ++t) {
        if (missing(k, t)) continue;
        const double v = series(k, t);
        if (!std::isfinite(v) || v < 0.0) {
          throw DataError("series '" + labels[static_cast<std::size_t>(k)] + "' has invalid value " +
                          std::to_string(v) + " at step " + std::to_string(t + 1));
        }
      }
  }

  static Dataset fully_observed(Matrix values, std::vector<std::string> labels) {
    Dataset d{std::move(values), {}, std::move(labels)};
    d.missing.setConstant(d.series.rows(), d.series.cols(), false);
    return d;
  }
};

/// Joint n-dimensional filtering. Missing cells contribute no likelihood
/// factor. One report per series; ESS and resampling traces are shared.
/// `truth` (n x T latent states), when given, adds RMSE traces.
inline std::vector<FilterReport> filter_dataset(const VarModel& model, const Dataset& data,
                                                const FilterConfig& config,
                                                const std::optional<Matrix>& truth = std::nullopt,
                                                const FilterObserver& observer = {}) {
  data.validate();
  const std::size_t n = data.dim();
  const std::size_t steps = data.steps();
  if (n != model.dim()) {
    throw ConfigError("model dimension " + std::to_string(model.dim()) + " does not match dataset with " +
                      std::to_string(n) + " series");
  }
  if (truth && (static_cast<std::size_t>(truth->rows()) != n || static_cast<std::size_t>(truth->cols()) != steps)) {
    throw DataError("truth shape does not match dataset");
  }
  std::vector<double> table(n * steps);
  for (std::size_t t = 0; t < steps; ++t)
    for (std::size_t k = 0; k < n; ++k) {
      const auto r = static_cast<Eigen::Index>(k);
      const auto c = static_cast<Eigen::Index>(t);
      table[t * n + k] = data.missing(r, c) ? std::numeric_limits<double>::quiet_NaN() : data.series(r, c);
    }
  VarProcess process(model);
  const JointFilterOutput raw = run_sisr(process, config, table, observer);

  std::vector<FilterReport> reports(n);
  for (std::size_t k = 0; k < n; ++k) {
    FilterReport& r = reports[k];
    r.estimates.resize(steps);
    r.predicted_observations.resize(steps);
    for (std::size_t t = 0; t < steps; ++t) {
      r.estimates[t] = raw.estimates[t * n + k];
      r.predicted_observations[t] = raw.predicted_observations[t * n + k];
    }
    r.ess_trace = raw.ess_trace;
    r.resample_counts = raw.resample_counts;
    r.label = data.labels[k];
    r.config = config;
    if (truth) {
      std::vector<double> row(steps);
      for (std::size_t t = 0; t < steps; ++t)
        row[t] = (*truth)(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(t));
      r.rmse_trace = rmse_trace(row, r.estimates);
      r.truth = std::move(row);
    }
  }
  return reports;
}

/// Fills masked cells with the filter's predicted observation E[z_t | data]
/// so the output stays on the data scale; observed cells are copied as-is.
inline Dataset impute(const std::vector<FilterReport>& reports, const Dataset& data) {
  if (reports.size() != data.dim()) throw DataError("impute: one report per series is required");
  Dataset out = data;
  for (std::size_t k = 0; k < data.dim(); ++k) {
    if (reports[k].predicted_observations.size() != data.steps()) {
      throw DataError("impute: report for '" + data.labels[k] + "' does not cover the dataset horizon");
    }
    for (std::size_t t = 0; t < data.steps(); ++t) {
      const auto r = static_cast<Eigen::Index>(k);
      const auto c = static_cast<Eigen::Index>(t);
      if (data.missing(r, c)) out.series(r, c) = reports[k].predicted_observations[t];
    }
  }
  out.missing.setConstant(false);
  return out;
}

/// Masks round(fraction * n * T) distinct cells chosen uniformly at random.
/// Cells already missing stay missing. Returns the number of newly masked cells.
inline std::size_t mask_random_cells(Dataset& data, double fraction, Rng& rng) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw ConfigError("mask fraction must lie in [0, 1)");
  const std::size_t total = data.dim() * data.steps();
  const auto count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(total)));
  std::vector<std::size_t> cells(total);
  for (std::size_t i = 0; i < total; ++i) cells[i] = i;
  // Partial Fisher-Yates; the first `count` entries are the sample.
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + std::min(total - i - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(total - i)));
    std::swap(cells[i], cells[j]);
  }
  std::size_t masked = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const auto k = static_cast<Eigen::Index>(cells[i] % data.dim());
    const auto t = static_cast<Eigen::Index>(cells[i] / data.dim());
    if (!data.missing(k, t)) ++masked;
    data.missing(k, t) = true;
  }
  return masked;
}

struct ImputationScore {
  std::size_t cells = 0;
  double rmse = 0.0;           ///< imputed values vs held-out values
  double baseline_rmse = 0.0;  ///< per-series mean of observed cells vs held-out values
};

/// Scores the masked cells of `masked` after imputation against `complete`
/// (n x T held-out values). The baseline fills each series with the mean of its
/// observed cells (0 when a series has none).
inline ImputationScore score_imputation(const Dataset& masked, const Dataset& imputed, const Matrix& complete) {
  if (complete.rows() != masked.series.rows() || complete.cols() != masked.series.cols() ||
      imputed.series.rows() != masked.series.rows() || imputed.series.cols() != masked.series.cols()) {
    throw DataError("score_imputation: shape mismatch");
  }
  ImputationScore score;
  double se = 0.0;
  double se_base = 0.0;
  for (Eigen::Index k = 0; k < masked.series.rows(); ++k) {
    double sum = 0.0;
    std::size_t observed = 0;
    for (Eigen::Index t = 0; t < masked.series.cols(); ++t) {
      if (masked.missing(k, t)) continue;
      sum += masked.series(k, t);
      ++observed;
    }
    const double mean = observed > 0 ? sum / static_cast<double>(observed) : 0.0;
    for (Eigen::Index t = 0; t < masked.series.cols(); ++t) {
      if (!masked.missing(k, t)) continue;
      const double e = imputed.series(k, t) - complete(k, t);
      const double b = mean - complete(k, t);
      se += e * e;
      se_base += b * b;
      ++score.cells;
    }
  }
  if (score.cells > 0) {
    score.rmse = std::sqrt(se / static_cast<double>(score.cells));
    score.baseline_rmse = std::sqrt(se_base / static_cast<double>(score.cells));
  }
  return score;
}

}  // namespace vbsmc

#endif
