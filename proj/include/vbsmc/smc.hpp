#ifndef VBSMC_SMC_HPP
#define VBSMC_SMC_HPP

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vbsmc/arma.hpp"
#include "vbsmc/error.hpp"
#include "vbsmc/fgn.hpp"
#include "vbsmc/linalg.hpp"
#include "vbsmc/obs.hpp"
#include "vbsmc/parallel.hpp"
#include "vbsmc/rng.hpp"

namespace vbsmc {

/// One hypothesised trajectory. Histories are stored time-major: entry
/// t * dim + k is component k at zero-based time t.
struct Particle {
  std::vector<double> states;
  std::vector<double> innovations;
  double weight = 0.0;
};

class ParticleCloud {
 public:
  ParticleCloud(std::size_t count, std::size_t dim) : particles_(count), dim_(dim) {
    if (count < 2) throw ConfigError("a particle cloud needs at least 2 particles");
    if (dim == 0) throw ConfigError("state dimension must be >= 1");
  }

  std::size_t size() const noexcept { return particles_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  /// Number of time steps held in every particle's history.
  std::size_t steps() const noexcept { return steps_; }
  void set_steps(std::size_t s) noexcept { steps_ = s; }

  Particle& operator[](std::size_t i) { return particles_[i]; }
  const Particle& operator[](std::size_t i) const { return particles_[i]; }
  std::vector<Particle>& particles() noexcept { return particles_; }
  const std::vector<Particle>& particles() const noexcept { return particles_; }

  std::vector<double> weights() const {
    std::vector<double> w(size());
    for (std::size_t i = 0; i < size(); ++i) w[i] = particles_[i].weight;
    return w;
  }
  double weight_sum() const {
    const auto w = weights();
    return pairwise_sum(w);
  }
  /// Latest value of component k for particle i.
  double current(std::size_t i, std::size_t k = 0) const {
    return particles_[i].states[(steps_ - 1) * dim_ + k];
  }

 private:
  std::vector<Particle> particles_;
  std::size_t dim_;
  std::size_t steps_ = 0;
};

/// A latent-state prior the filter can propagate. `advance` samples step t
/// (zero-based) from the prior transition given the first t steps of a
/// particle's histories and writes the new state/innovation vectors. `prepare`
/// is called serially before any concurrent `advance` at step t.
template <class P>
concept StateProcess = requires(P& mut, const P& p, std::span<const double> hist, std::size_t t,
                                std::span<double> out, Rng& rng) {
  { p.dim() } -> std::convertible_to<std::size_t>;
  mut.prepare(t);
  p.advance(hist, hist, t, out, out, rng);
};

/// Scalar ARMA prior with fGn innovations.
class ArmaProcess {
 public:
  explicit ArmaProcess(ArmaModel model) : model_(std::move(model)), predictor_(model_.innovations) {}

  std::size_t dim() const noexcept { return 1; }
  const ArmaModel& model() const noexcept { return model_; }
  void prepare(std::size_t t) { predictor_.extend_to(t); }

  void advance(std::span<const double> states, std::span<const double> innovations, std::size_t t,
               std::span<double> state_out, std::span<double> innovation_out, Rng& rng) const {
    const ConditionalGaussian c = predictor_.conditional(innovations.first(t));
    const double u = c.mean + std::sqrt(c.variance) * standard_normal(rng);
    innovation_out[0] = u;
    state_out[0] = arma_drift(model_, states, innovations, t) + u;
  }

 private:
  ArmaModel model_;
  FgnPredictor predictor_;
};

/// Independent substream per particle slot. Slot i always uses stream i, so
/// draws do not depend on how slots are spread across workers.
class ParticleStreams {
 public:
  ParticleStreams(std::uint64_t seed, std::size_t count) {
    streams_.reserve(count);
    for (std::size_t i = 0; i < count; ++i) streams_.push_back(make_stream(seed, StreamTag::particle, i));
  }
  Rng& operator[](std::size_t i) { return streams_[i]; }
  std::size_t size() const noexcept { return streams_.size(); }

 private:
  std::vector<Rng> streams_;
};

/// Draws x_1 for every particle from the prior; uniform weights.
template <StateProcess P>
ParticleCloud init_cloud(P& process, std::size_t n_particles, ParticleStreams& streams,
                         std::size_t workers = 1) {
  ParticleCloud cloud(n_particles, process.dim());
  if (streams.size() < n_particles) throw ConfigError("init_cloud: fewer streams than particles");
  const std::size_t d = process.dim();
  process.prepare(0);
  const double w0 = 1.0 / static_cast<double>(n_particles);
  parallel_for(n_particles, workers, [&](std::size_t i) {
    Particle& p = cloud[i];
    p.states.assign(d, 0.0);
    p.innovations.assign(d, 0.0);
    p.weight = w0;
    process.advance({}, {}, 0, p.states, p.innovations, streams[i]);
  });
  cloud.set_steps(1);
  return cloud;
}

/// Extends every particle by one step drawn from the prior. Weights untouched.
template <StateProcess P>
void propagate(ParticleCloud& cloud, P& process, ParticleStreams& streams, std::size_t workers = 1) {
  const std::size_t t = cloud.steps();
  const std::size_t d = cloud.dim();
  process.prepare(t);
  parallel_for(cloud.size(), workers, [&](std::size_t i) {
    Particle& p = cloud[i];
    p.states.resize((t + 1) * d);
    p.innovations.resize((t + 1) * d);
    const std::span<double> xs(p.states);
    const std::span<double> us(p.innovations);
    process.advance(xs.first(t * d), us.first(t * d), t, xs.subspan(t * d, d), us.subspan(t * d, d),
                    streams[i]);
  });
  cloud.set_steps(t + 1);
}

namespace detail {

/// Normalizes log-weights in place into linear weights (log-sum-exp).
inline void normalize_log_weights(ParticleCloud& cloud, std::vector<double>& logw) {
  const std::size_t n = cloud.size();
  double top = -std::numeric_limits<double>::infinity();
  for (double l : logw) top = std::max(top, l);
  if (top == std::numeric_limits<double>::infinity()) {
    // Some likelihoods are infinite (z = 0 with shape < 1): the limit keeps
    // only those particles, in proportion to their previous weights.
    for (std::size_t i = 0; i < n; ++i) {
      logw[i] = logw[i] == top ? std::log(cloud[i].weight)
                               : -std::numeric_limits<double>::infinity();
    }
    top = -std::numeric_limits<double>::infinity();
    for (double l : logw) top = std::max(top, l);
  }
  if (!(top > -std::numeric_limits<double>::infinity())) {
    throw WeightUnderflowError(cloud.steps());
  }
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = std::exp(logw[i] - top);
  const double total = pairwise_sum(w);
  for (std::size_t i = 0; i < n; ++i) cloud[i].weight = w[i] / total;
}

}  // namespace detail

/// w_i <- w_i p(z_t | x_t^{(i)}), then normalize. `z` holds one value per state
/// component; NaN marks a missing component, which contributes no factor. If
/// every component is missing the weights are left as they are.
inline void reweight(ParticleCloud& cloud, std::span<const double> z, const ObservationChannel& channel,
                     std::size_t workers = 1) {
  if (z.size() != cloud.dim()) throw ConfigError("reweight: observation dimension mismatch");
  bool any = false;
  for (double v : z) {
    if (std::isnan(v)) continue;
    if (v < 0.0) {
      throw DataError("negative observation " + std::to_string(v) + " at step " +
                      std::to_string(cloud.steps()));
    }
    any = true;
  }
  if (!any) return;
  std::vector<double> logw(cloud.size());
  parallel_for(cloud.size(), workers, [&](std::size_t i) {
    double ll = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) {
      if (std::isnan(z[k])) continue;
      ll += channel.log_likelihood(z[k], cloud.current(i, k));
    }
    logw[i] = std::log(cloud[i].weight) + ll;
  });
  detail::normalize_log_weights(cloud, logw);
}

inline void reweight(ParticleCloud& cloud, double z, const ObservationChannel& channel,
                     std::size_t workers = 1) {
  reweight(cloud, std::span<const double>(&z, 1), channel, workers);
}

namespace detail {

inline std::vector<double> cumulative(const std::vector<double>& w) {
  std::vector<double> cdf(w.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    acc += w[i];
    cdf[i] = acc;
  }
  return cdf;
}

/// Index j with cdf[j-1] <= u * total < cdf[j].
inline std::size_t select(const std::vector<double>& cdf, double u) {
  const double target = u * cdf.back();
  auto it = std::upper_bound(cdf.begin(), cdf.end(), target);
  if (it == cdf.end()) --it;
  return static_cast<std::size_t>(it - cdf.begin());
}

inline void rebuild(ParticleCloud& cloud, const std::vector<std::size_t>& ancestors) {
  std::vector<Particle> next;
  next.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) next.push_back(cloud[ancestors[i]]);
  cloud.particles().swap(next);
}

inline void renormalize(ParticleCloud& cloud) {
  const double total = cloud.weight_sum();
  for (auto& p : cloud.particles()) p.weight /= total;
}

}  // namespace detail

/// Replace-with-probability resampling. Each particle i is independently
/// replaced with probability 1 - w_i. A replacement copies the history of a
/// particle chosen by weight from the current cloud (with replacement) and
/// takes the arithmetic mean of the other N - 1 weights, (1 - w_i) / (N - 1).
/// Weights are renormalized afterwards. Returns the number of replacements.
inline std::size_t resample_paper(ParticleCloud& cloud, Rng& rng) {
  const std::size_t n = cloud.size();
  const std::vector<double> w = cloud.weights();
  const std::vector<double> cdf = detail::cumulative(w);
  std::vector<std::size_t> ancestors(n);
  std::vector<double> new_weights(n);
  std::size_t replaced = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (uniform01(rng) < w[i]) {
      ancestors[i] = i;
      new_weights[i] = w[i];
    } else {
      ancestors[i] = detail::select(cdf, uniform01(rng));
      new_weights[i] = (1.0 - w[i]) / static_cast<double>(n - 1);
      ++replaced;
    }
  }
  if (replaced > 0) detail::rebuild(cloud, ancestors);
  for (std::size_t i = 0; i < n; ++i) cloud[i].weight = new_weights[i];
  detail::renormalize(cloud);
  return replaced;
}

/// Systematic resampling: one uniform offset, N evenly spaced points, weights
/// reset to 1/N. Returns the number of slots whose particle changed.
inline std::size_t resample_systematic(ParticleCloud& cloud, Rng& rng) {
  const std::size_t n = cloud.size();
  const std::vector<double> cdf = detail::cumulative(cloud.weights());
  const double total = cdf.back();
  const double offset = uniform01(rng);
  std::vector<std::size_t> ancestors(n);
  std::size_t j = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double point = (offset + static_cast<double>(k)) / static_cast<double>(n) * total;
    while (j + 1 < n && cdf[j] <= point) ++j;
    ancestors[k] = j;
  }
  std::size_t changed = 0;
  for (std::size_t i = 0; i < n; ++i) changed += ancestors[i] != i;
  if (changed > 0) detail::rebuild(cloud, ancestors);
  const double w0 = 1.0 / static_cast<double>(n);
  for (auto& p : cloud.particles()) p.weight = w0;
  return changed;
}

/// Posterior-mean estimate of the latest state, component k.
inline double estimate(const ParticleCloud& cloud, std::size_t k = 0) {
  std::vector<double> terms(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) terms[i] = cloud[i].weight * cloud.current(i, k);
  return pairwise_sum(terms);
}

inline double ess(const ParticleCloud& cloud) {
  std::vector<double> sq(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) sq[i] = cloud[i].weight * cloud[i].weight;
  return 1.0 / pairwise_sum(sq);
}

/// Weighted mean of E[z | x] over the cloud for component k.
inline double predicted_observation(const ParticleCloud& cloud, const ObservationChannel& channel,
                                    std::size_t k = 0) {
  std::vector<double> terms(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i)
    terms[i] = cloud[i].weight * channel.expected_observation(cloud.current(i, k));
  return pairwise_sum(terms);
}

enum class ResamplingScheme {
  paper,       ///< replace-with-probability 1 - w
  systematic,
};

inline std::string to_string(ResamplingScheme s) {
  return s == ResamplingScheme::paper ? "paper" : "systematic";
}

inline ResamplingScheme parse_resampling_scheme(const std::string& s) {
  if (s == "paper") return ResamplingScheme::paper;
  if (s == "systematic") return ResamplingScheme::systematic;
  throw ConfigError("unknown resampling scheme '" + s + "' (expected paper or systematic)");
}

/// Filter settings shared by the scalar ARMA and the multivariate VAR filters.
struct FilterConfig {
  std::size_t n_particles = 1000;
  ResamplingScheme resampling = ResamplingScheme::paper;
  std::uint64_t seed = 0;
  /// When set, resample only if ESS < threshold * N. Unset: every step.
  std::optional<double> ess_threshold;
  std::size_t workers = 1;
  ObservationChannel channel;

  void validate() const {
    if (n_particles < 2) throw ConfigError("filter.particles must be >= 2");
    if (workers == 0) throw ConfigError("filter.workers must be >= 1");
    if (ess_threshold && !(*ess_threshold > 0.0 && *ess_threshold <= 1.0)) {
      throw ConfigError("filter.ess_threshold must lie in (0, 1]");
    }
  }
};

enum class FilterStage { reweighted, resampled };

/// Called after every reweight and every resampling decision.
using FilterObserver = std::function<void(const ParticleCloud&, FilterStage)>;

/// Raw output of a joint run: time-major T x dim tables.
struct JointFilterOutput {
  std::size_t dim = 0;
  std::size_t steps = 0;
  std::vector<double> estimates;
  std::vector<double> predicted_observations;
  std::vector<double> ess_trace;
  std::vector<std::size_t> resample_counts;
};

/// SISR loop: init, then per step propagate, reweight, estimate, resample.
/// Estimates and ESS are taken after reweighting and before resampling.
/// `observations` is time-major T x dim; NaN marks a missing component.
template <StateProcess P>
JointFilterOutput run_sisr(P& process, const FilterConfig& config, std::span<const double> observations,
                           const FilterObserver& observer = {}) {
  config.validate();
  const std::size_t d = process.dim();
  if (observations.empty() || observations.size() % d != 0) {
    throw DataError("observation table must hold a positive multiple of the state dimension");
  }
  const std::size_t steps = observations.size() / d;
  JointFilterOutput out;
  out.dim = d;
  out.steps = steps;
  out.estimates.reserve(steps * d);
  out.predicted_observations.reserve(steps * d);

  ParticleStreams streams(config.seed, config.n_particles);
  Rng resample_rng = make_stream(config.seed, StreamTag::resampling);
  std::optional<ParticleCloud> cloud;
  for (std::size_t t = 0; t < steps; ++t) {
    if (t == 0) {
      cloud.emplace(init_cloud(process, config.n_particles, streams, config.workers));
    } else {
      propagate(*cloud, process, streams, config.workers);
    }
    reweight(*cloud, observations.subspan(t * d, d), config.channel, config.workers);
    if (observer) observer(*cloud, FilterStage::reweighted);
    for (std::size_t k = 0; k < d; ++k) {
      out.estimates.push_back(estimate(*cloud, k));
      out.predicted_observations.push_back(predicted_observation(*cloud, config.channel, k));
    }
    const double e = ess(*cloud);
    out.ess_trace.push_back(e);
    std::size_t count = 0;
    const bool due = !config.ess_threshold ||
                     e < *config.ess_threshold * static_cast<double>(config.n_particles);
    if (due) {
      count = config.resampling == ResamplingScheme::paper ? resample_paper(*cloud, resample_rng)
                                                           : resample_systematic(*cloud, resample_rng);
    }
    out.resample_counts.push_back(count);
    if (observer) observer(*cloud, FilterStage::resampled);
  }
  return out;
}

/// RMSE_t = sqrt(mean_{i<=t} (x_i - xhat_i)^2) for every prefix.
inline std::vector<double> rmse_trace(std::span<const double> truth, std::span<const double> estimates) {
  if (truth.size() != estimates.size()) throw DataError("truth and estimate lengths differ");
  std::vector<double> out(truth.size());
  double acc = 0.0;
  for (std::size_t t = 0; t < truth.size(); ++t) {
    const double e = truth[t] - estimates[t];
    acc += e * e;
    out[t] = std::sqrt(acc / static_cast<double>(t + 1));
  }
  return out;
}

struct FilterReport {
  std::vector<double> estimates;
  std::vector<double> predicted_observations;
  std::optional<std::vector<double>> truth;
  std::optional<std::vector<double>> rmse_trace;
  std::vector<double> ess_trace;
  std::vector<std::size_t> resample_counts;
  std::string label;
  FilterConfig config;

  std::size_t steps() const noexcept { return estimates.size(); }
  std::optional<double> final_rmse() const {
    if (!rmse_trace || rmse_trace->empty()) return std::nullopt;
    return rmse_trace->back();
  }
};

/// Scalar ARMA filtering run. `truth`, when given, adds the RMSE trace.
inline FilterReport run_filter(const ArmaModel& model, const FilterConfig& config,
                               std::span<const double> observations,
                               std::optional<std::span<const double>> truth = std::nullopt,
                               const FilterObserver& observer = {}) {
  if (observations.empty()) throw DataError("at least one observation is required");
  if (truth && truth->size() != observations.size()) {
    throw DataError("truth has " + std::to_string(truth->size()) + " rows, observations have " +
                    std::to_string(observations.size()));
  }
  for (std::size_t t = 0; t < observations.size(); ++t) {
    if (!(observations[t] >= 0.0) || !std::isfinite(observations[t])) {
      throw DataError("observation at step " + std::to_string(t + 1) + " must be finite and >= 0");
    }
  }
  ArmaProcess process(model);
  JointFilterOutput raw = run_sisr(process, config, observations, observer);
  FilterReport report;
  report.estimates = std::move(raw.estimates);
  report.predicted_observations = std::move(raw.predicted_observations);
  report.ess_trace = std::move(raw.ess_trace);
  report.resample_counts = std::move(raw.resample_counts);
  report.label = model.label();
  report.config = config;
  if (truth) {
    report.truth = std::vector<double>(truth->begin(), truth->end());
    report.rmse_trace = rmse_trace(*truth, report.estimates);
  }
  return report;
}

}  // namespace vbsmc

#endif
