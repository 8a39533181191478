#ifndef VBSMC_FGN_HPP
#define VBSMC_FGN_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vbsmc/error.hpp"
#include "vbsmc/linalg.hpp"
#include "vbsmc/rng.hpp"

namespace vbsmc {

/// Hurst exponent, strictly inside (0, 1).
class HurstExponent {
 public:
  explicit HurstExponent(double value) : value_(value) {
    if (!(value > 0.0 && value < 1.0)) {
      throw ConfigError("Hurst exponent must lie strictly inside (0, 1), got " +
                        std::to_string(value));
    }
  }
  double value() const noexcept { return value_; }

 private:
  double value_;
};

/// Fractional Gaussian innovation law: Hurst exponent plus marginal variance.
struct FgnSpec {
  HurstExponent hurst;
  double sigma2;

  FgnSpec(HurstExponent h, double variance) : hurst(h), sigma2(variance) {
    if (!(variance >= 0.0) || !std::isfinite(variance)) {
      throw ConfigError("innovation variance must be finite and >= 0, got " +
                        std::to_string(variance));
    }
  }
};

/// Normalized fGn autocorrelation at integer lag `tau`:
/// 0.5 * (|tau+1|^{2H} - 2|tau|^{2H} + |tau-1|^{2H}).
inline double fgn_autocorrelation(std::int64_t tau, HurstExponent h) {
  if (tau < 0) tau = -tau;
  if (tau == 0) return 1.0;
  const double two_h = 2.0 * h.value();
  const double t = static_cast<double>(tau);
  return 0.5 * (std::pow(t + 1.0, two_h) - 2.0 * std::pow(t, two_h) + std::pow(t - 1.0, two_h));
}

/// Toeplitz correlation matrix R with R(i, j) = rho(i - j).
inline Matrix fgn_correlation_matrix(std::size_t t, HurstExponent h) {
  if (t == 0) throw ConfigError("fGn horizon must be >= 1");
  std::vector<double> rho(t);
  for (std::size_t k = 0; k < t; ++k) rho[k] = fgn_autocorrelation(static_cast<std::int64_t>(k), h);
  const auto n = static_cast<Eigen::Index>(t);
  Matrix r(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) r(i, j) = rho[static_cast<std::size_t>(std::abs(i - j))];
  return r;
}

/// Covariance of u_{1:t}: sigma2 * R.
inline CovarianceMatrix fgn_covariance(std::size_t t, const FgnSpec& spec) {
  return CovarianceMatrix(spec.sigma2 * fgn_correlation_matrix(t, spec.hurst));
}

/// Draws length-t fGn vectors through a cached lower Cholesky factor of R.
///
/// The factorization is attempted without modification first; if it breaks
/// down, 1e-10 is added to the correlation diagonal (1e-10 * sigma2 in
/// covariance units) and the retry is recorded in `jitter()`. A second failure
/// propagates as FactorizationError with the offending pivot.
class FgnSampler {
 public:
  FgnSampler(std::size_t t, const FgnSpec& spec) : spec_(spec), horizon_(t) {
    if (t == 0) throw ConfigError("fGn horizon must be >= 1");
    if (spec.sigma2 == 0.0) return;
    const Matrix r = fgn_correlation_matrix(t, spec.hurst);
    try {
      factor_ = cholesky_lower(r);
    } catch (const FactorizationError&) {
      constexpr double kJitter = 1e-10;
      factor_ = cholesky_lower(r + kJitter * Matrix::Identity(r.rows(), r.cols()));
      jitter_ = kJitter * spec.sigma2;
    }
  }

  std::size_t horizon() const noexcept { return horizon_; }
  /// Diagonal jitter added to the covariance, 0 when none was needed.
  double jitter() const noexcept { return jitter_; }

  std::vector<double> draw(Rng& rng) const {
    std::vector<double> out(horizon_, 0.0);
    if (spec_.sigma2 == 0.0) return out;
    Vector z(static_cast<Eigen::Index>(horizon_));
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = standard_normal(rng);
    Vector u = factor_.triangularView<Eigen::Lower>() * z;
    u *= std::sqrt(spec_.sigma2);
    for (std::size_t i = 0; i < horizon_; ++i) out[i] = u(static_cast<Eigen::Index>(i));
    return out;
  }

 private:
  FgnSpec spec_;
  std::size_t horizon_;
  Matrix factor_;
  double jitter_ = 0.0;
};

inline std::vector<double> sample_fgn(std::size_t t, const FgnSpec& spec, Rng& rng) {
  return FgnSampler(t, spec).draw(rng);
}

struct ConditionalGaussian {
  double mean;
  double variance;
};

/// One-step predictor for fGn: the law of u_t given u_{1:t-1}.
///
/// Durbin-Levinson recursion on the Toeplitz correlation. Row n of the cache
/// holds the coefficients a_{n,1..n} of the best linear predictor
/// u_t ~ sum_j a_{n,j} u_{t-j} with n = t - 1, together with the normalized
/// prediction variance v_n; this is the unit-lower-triangular (innovations)
/// factorization of R^{-1}. Growing the cache by one step costs O(n), and the
/// rows depend only on H, so one predictor is shared by every particle.
///
/// `extend_to` mutates; `conditional` is const and safe to call concurrently
/// once the cache covers the requested length.
class FgnPredictor {
 public:
  explicit FgnPredictor(const FgnSpec& spec) : spec_(spec) {
    coefficients_.emplace_back();
    variances_.push_back(1.0);
  }

  const FgnSpec& spec() const noexcept { return spec_; }
  std::size_t cached_length() const noexcept { return coefficients_.size() - 1; }

  /// Ensures histories up to `history_length` values can be conditioned on.
  void extend_to(std::size_t history_length) {
    const HurstExponent h = spec_.hurst;
    while (cached_length() < history_length) {
      const std::size_t n = cached_length();  // current row order
      const auto& prev = coefficients_.back();
      const double v_prev = variances_.back();
      double num = fgn_autocorrelation(static_cast<std::int64_t>(n + 1), h);
      for (std::size_t j = 1; j <= n; ++j)
        num -= prev[j - 1] * fgn_autocorrelation(static_cast<std::int64_t>(n + 1 - j), h);
      const double reflection = num / v_prev;
      std::vector<double> next(n + 1);
      for (std::size_t j = 1; j <= n; ++j) next[j - 1] = prev[j - 1] - reflection * prev[n - j];
      next[n] = reflection;
      const double v_next = v_prev * (1.0 - reflection * reflection);
      if (!(v_next > 0.0)) {
        throw FactorizationError("fGn prediction variance collapsed", n + 1);
      }
      coefficients_.push_back(std::move(next));
      variances_.push_back(v_next);
    }
  }

  /// Predictor coefficients for a history of length n: element j-1 multiplies u_{t-j}.
  std::span<const double> coefficients(std::size_t n) const { return coefficients_.at(n); }

  /// Conditional law of the next innovation given `history` (oldest first).
  ConditionalGaussian conditional(std::span<const double> history) const {
    return conditional_strided(history, 1, history.size());
  }

  /// Same as conditional(), reading `length` values spaced `stride` apart.
  /// Used for interleaved multivariate histories.
  ConditionalGaussian conditional_strided(std::span<const double> data, std::size_t stride,
                                          std::size_t length) const {
    if (length > cached_length()) {
      throw NumericError("fGn predictor cache too short: have " + std::to_string(cached_length()) +
                         ", need " + std::to_string(length));
    }
    const auto& a = coefficients_[length];
    double mean = 0.0;
    for (std::size_t j = 1; j <= length; ++j) mean += a[j - 1] * data[(length - j) * stride];
    return {mean, spec_.sigma2 * variances_[length]};
  }

 private:
  FgnSpec spec_;
  std::vector<std::vector<double>> coefficients_;
  std::vector<double> variances_;
};

/// Conditional law of u_t given u_{1:t-1}; `next_index` is the one-based t.
inline ConditionalGaussian fgn_conditional(std::size_t next_index, std::span<const double> history,
                                           const FgnSpec& spec) {
  if (next_index == 0 || history.size() != next_index - 1) {
    throw ConfigError("fgn_conditional: history length " + std::to_string(history.size()) +
                      " does not match next index " + std::to_string(next_index));
  }
  FgnPredictor predictor(spec);
  predictor.extend_to(history.size());
  return predictor.conditional(history);
}

}  // namespace vbsmc

#endif
