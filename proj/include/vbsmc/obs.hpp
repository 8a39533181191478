#ifndef VBSMC_OBS_HPP
#define VBSMC_OBS_HPP

#include <cmath>
#include <cstddef>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "vbsmc/error.hpp"
#include "vbsmc/rng.hpp"

namespace vbsmc {

/// Gamma law in shape-scale form: density v^{shape-1} e^{-v/scale} / (scale^shape Gamma(shape)).
struct GammaNoiseParams {
  double alpha;  ///< scale
  double beta;   ///< shape

  GammaNoiseParams(double scale, double shape) : alpha(scale), beta(shape) {
    if (!(scale > 0.0) || !std::isfinite(scale) || !(shape > 0.0) || !std::isfinite(shape)) {
      throw ConfigError("gamma noise needs alpha > 0 and beta > 0, got alpha=" +
                        std::to_string(scale) + " beta=" + std::to_string(shape));
    }
  }

  double mean() const noexcept { return alpha * beta; }
  double variance() const noexcept { return alpha * alpha * beta; }

  friend bool operator==(const GammaNoiseParams&, const GammaNoiseParams&) = default;
};

inline double noise_mean(const GammaNoiseParams& params) { return params.mean(); }

inline double gamma_log_density(double v, const GammaNoiseParams& p) {
  if (v < 0.0) return -std::numeric_limits<double>::infinity();
  if (v == 0.0) {
    if (p.beta > 1.0) return -std::numeric_limits<double>::infinity();
    if (p.beta < 1.0) return std::numeric_limits<double>::infinity();
    return -std::log(p.alpha);
  }
  return (p.beta - 1.0) * std::log(v) - v / p.alpha - p.beta * std::log(p.alpha) - std::lgamma(p.beta);
}

inline double sample_gamma(const GammaNoiseParams& params, Rng& rng) {
  std::gamma_distribution<double> dist(params.beta, params.alpha);
  return dist(rng);
}

inline std::vector<double> sample_noise(const GammaNoiseParams& params, std::size_t count, Rng& rng) {
  if (count == 0) throw ConfigError("sample_noise: count must be >= 1");
  std::vector<double> out(count);
  for (auto& v : out) v = sample_gamma(params, rng);
  return out;
}

/// z = v * exp(x / 2), v ~ Gamma(shape beta, scale alpha).
inline double observe(double x, const GammaNoiseParams& params, Rng& rng) {
  return sample_gamma(params, rng) * std::exp(0.5 * x);
}

/// log p(z | x) for z = v exp(x/2): gamma log-density at v = z e^{-x/2} plus
/// the Jacobian -x/2. At z = 0 the analytic limit is returned (-inf for
/// beta > 1, finite for beta = 1, +inf for beta < 1).
inline double log_likelihood(double z, double x, const GammaNoiseParams& params) {
  if (z < 0.0 || std::isnan(z)) throw DataError("observation must be >= 0, got " + std::to_string(z));
  return gamma_log_density(z * std::exp(-0.5 * x), params) - 0.5 * x;
}

enum class ChannelKind {
  log_volatility,
};

/// Nonlinear observation channel. Every kind supplies a sampler and a
/// log-likelihood; the filter only talks to this interface.
struct ObservationChannel {
  ChannelKind kind = ChannelKind::log_volatility;
  GammaNoiseParams noise{0.5, 1.0};

  double sample(double x, Rng& rng) const {
    switch (kind) {
      case ChannelKind::log_volatility:
        return observe(x, noise, rng);
    }
    throw ConfigError("unknown observation channel");
  }

  double log_likelihood(double z, double x) const {
    switch (kind) {
      case ChannelKind::log_volatility:
        return vbsmc::log_likelihood(z, x, noise);
    }
    throw ConfigError("unknown observation channel");
  }

  /// E[z | x].
  double expected_observation(double x) const {
    switch (kind) {
      case ChannelKind::log_volatility:
        return noise.mean() * std::exp(0.5 * x);
    }
    throw ConfigError("unknown observation channel");
  }
};

}  // namespace vbsmc

#endif
