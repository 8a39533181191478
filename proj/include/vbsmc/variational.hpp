#ifndef VBSMC_VARIATIONAL_HPP
#define VBSMC_VARIATIONAL_HPP

#include <boost/math/special_functions/digamma.hpp>

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "vbsmc/error.hpp"
#include "vbsmc/linalg.hpp"
#include "vbsmc/obs.hpp"
#include "vbsmc/rng.hpp"

namespace vbsmc {

/// Sign applied to the residual term sum_l (z_l - x_l)^2 E[v_l] of the
/// variational log-density. `as_printed` (+1) keeps the published form, which
/// rewards large residuals; `likelihood` (-1) turns the term into a Gaussian
/// data-fit penalty.
enum class ResidualSign {
  as_printed,
  likelihood,
};

inline double residual_sign_value(ResidualSign s) { return s == ResidualSign::as_printed ? 1.0 : -1.0; }

/// q(x_{1:t} | z_{1:t}) proportional to N(x; 0, C_x) exp{ s sum_l (z_l - x_l)^2 E[v_l] },
/// with E[v_l] taken from the per-step variational noise laws q(v_l).
class VariationalPosterior {
 public:
  VariationalPosterior(CovarianceMatrix state_cov, std::vector<GammaNoiseParams> noise_laws,
                       ResidualSign sign = ResidualSign::as_printed)
      : cov_(std::move(state_cov)), noise_laws_(std::move(noise_laws)), sign_(sign) {
    if (noise_laws_.size() != cov_.dim()) {
      throw ConfigError("variational posterior: " + std::to_string(noise_laws_.size()) +
                        " noise laws for covariance of dimension " + std::to_string(cov_.dim()));
    }
    chol_.compute(cov_.matrix());
    if (chol_.info() != Eigen::Success) {
      throw NumericError("variational posterior: state covariance is singular");
    }
    log_det_ = 2.0 * chol_.matrixL().toDenseMatrix().diagonal().array().log().sum();
  }

  /// Same noise law at every step.
  VariationalPosterior(CovarianceMatrix state_cov, const GammaNoiseParams& noise_law,
                       ResidualSign sign = ResidualSign::as_printed)
      : VariationalPosterior(state_cov, std::vector<GammaNoiseParams>(state_cov.dim(), noise_law), sign) {}

  std::size_t horizon() const noexcept { return cov_.dim(); }
  const CovarianceMatrix& state_covariance() const noexcept { return cov_; }
  const std::vector<GammaNoiseParams>& noise_laws() const noexcept { return noise_laws_; }
  ResidualSign sign() const noexcept { return sign_; }

  std::vector<double> noise_mean_per_step() const {
    std::vector<double> out;
    out.reserve(noise_laws_.size());
    for (const auto& law : noise_laws_) out.push_back(law.mean());
    return out;
  }

  /// log N(x; 0, C_x).
  double gaussian_log_density(const Vector& x) const {
    const Vector w = chol_.matrixL().solve(x);
    const double t = static_cast<double>(x.size());
    return -0.5 * (t * std::log(2.0 * std::numbers::pi) + log_det_ + w.squaredNorm());
  }

 private:
  CovarianceMatrix cov_;
  std::vector<GammaNoiseParams> noise_laws_;
  ResidualSign sign_;
  Eigen::LLT<Matrix> chol_;
  double log_det_ = 0.0;
};

/// log N(x; 0, C_x) + s sum_l (z_l - x_l)^2 E[v_l]; the normalizing constant is dropped.
inline double log_q_unnormalized(std::span<const double> x, std::span<const double> z,
                                 const VariationalPosterior& vp) {
  const std::size_t t = vp.horizon();
  if (x.size() != t || z.size() != t) {
    throw ConfigError("log_q_unnormalized: expected vectors of length " + std::to_string(t));
  }
  const Vector xv = Eigen::Map<const Vector>(x.data(), static_cast<Eigen::Index>(t));
  double residual = 0.0;
  const auto& laws = vp.noise_laws();
  for (std::size_t l = 0; l < t; ++l) {
    const double d = z[l] - x[l];
    residual += d * d * laws[l].mean();
  }
  return vp.gaussian_log_density(xv) + residual_sign_value(vp.sign()) * residual;
}

/// KL[q || p] between gamma laws in shape-scale form.
inline double kl_gamma(const GammaNoiseParams& q, const GammaNoiseParams& p) {
  if (q == p) return 0.0;
  using boost::math::digamma;
  const double kl = (q.beta - p.beta) * digamma(q.beta) - std::lgamma(q.beta) + std::lgamma(p.beta) +
                    p.beta * (std::log(p.alpha) - std::log(q.alpha)) +
                    q.beta * (q.alpha - p.alpha) / p.alpha;
  // Round-off can leave a tiny negative value for nearly equal laws.
  return kl < 0.0 ? 0.0 : kl;
}

struct FitnessEstimate {
  double value;               ///< expected_log_ratio - kl_noise
  double standard_error;      ///< of the Monte Carlo mean
  double expected_log_ratio;  ///< E_q[log p(x, z) - log q(x)]
  double kl_noise;            ///< sum_l KL[q(v_l) || p(v_l)]
  std::size_t samples;
};

/// Monte Carlo estimate of the variational fitness
///   C_f[q] = E_q[ log p(x, z) - log q(x | z) ] - KL[q(v) || p(v)]
/// where log p(x, z) = log N(x; 0, C_x) + sum_l log p(z_l | x_l) uses the
/// channel's exact likelihood. q(x | z) is the normalized Gaussian implied by
/// the posterior's quadratic form; it must be normalizable (precision
/// C_x^{-1} - 2 s diag(E[v]) positive definite) or NumericError is thrown.
/// Since both terms are bounded by log p(z), so is the estimate, up to MC error.
inline FitnessEstimate fitness_estimate(const VariationalPosterior& q, const ObservationChannel& channel,
                                        std::span<const double> z, std::size_t mc_samples, Rng& rng) {
  const std::size_t t = q.horizon();
  if (mc_samples == 0) throw ConfigError("fitness_estimate: mc_samples must be >= 1");
  if (z.size() != t) throw ConfigError("fitness_estimate: observation length mismatch");

  const auto n = static_cast<Eigen::Index>(t);
  const double s = residual_sign_value(q.sign());
  Vector d(n);
  const auto means = q.noise_mean_per_step();
  for (Eigen::Index l = 0; l < n; ++l) d(l) = means[static_cast<std::size_t>(l)];
  const Vector zv = Eigen::Map<const Vector>(z.data(), n);

  const Matrix cinv = q.state_covariance().matrix().llt().solve(Matrix::Identity(n, n));
  Matrix precision = cinv;
  precision.diagonal() -= 2.0 * s * d;
  Eigen::LLT<Matrix> prec_chol(precision);
  if (prec_chol.info() != Eigen::Success) {
    throw NumericError("fitness_estimate: variational posterior is not normalizable");
  }
  const Vector mu = prec_chol.solve((-2.0 * s * d.array() * zv.array()).matrix());
  const Matrix lp = prec_chol.matrixL();
  const double half_log_det_prec = lp.diagonal().array().log().sum();
  const double log_2pi = std::log(2.0 * std::numbers::pi);

  std::vector<double> ratios(mc_samples);
  for (std::size_t k = 0; k < mc_samples; ++k) {
    Vector eps(n);
    for (Eigen::Index l = 0; l < n; ++l) eps(l) = standard_normal(rng);
    const Vector x = mu + lp.transpose().triangularView<Eigen::Upper>().solve(eps);
    const double log_q = -0.5 * static_cast<double>(n) * log_2pi + half_log_det_prec - 0.5 * eps.squaredNorm();
    double log_joint = q.gaussian_log_density(x);
    for (Eigen::Index l = 0; l < n; ++l) log_joint += channel.log_likelihood(zv(l), x(l));
    const double r = log_joint - log_q;
    if (!std::isfinite(r)) {
      throw NumericError("fitness_estimate: non-finite log ratio at sample " + std::to_string(k));
    }
    ratios[k] = r;
  }
  const double mean = pairwise_sum(ratios) / static_cast<double>(mc_samples);
  std::vector<double> sq(mc_samples);
  for (std::size_t k = 0; k < mc_samples; ++k) sq[k] = (ratios[k] - mean) * (ratios[k] - mean);
  const double var = mc_samples > 1 ? pairwise_sum(sq) / static_cast<double>(mc_samples - 1) : 0.0;

  double kl = 0.0;
  for (const auto& law : q.noise_laws()) kl += kl_gamma(law, channel.noise);

  return {mean - kl, std::sqrt(var / static_cast<double>(mc_samples)), mean, kl, mc_samples};
}

}  // namespace vbsmc

#endif
