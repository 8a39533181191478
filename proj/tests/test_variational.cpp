#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <vector>

#include "vbsmc/arma.hpp"
#include "vbsmc/variational.hpp"

using namespace vbsmc;
using Catch::Approx;

namespace {

CovarianceMatrix identity(std::size_t t) {
  return CovarianceMatrix(Matrix::Identity(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(t)));
}

// Numeric KL by quadrature of q log(q/p) in log-space coordinates v = e^s.
double kl_quadrature(const GammaNoiseParams& q, const GammaNoiseParams& p) {
  const double lo = -40.0, hi = std::log(q.alpha) + std::log(q.beta + 60.0) + 3.0;
  const int n = 400000;
  const double h = (hi - lo) / n;
  double acc = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double s = lo + i * h;
    const double v = std::exp(s);
    const double lq = gamma_log_density(v, q);
    const double lp = gamma_log_density(v, p);
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    acc += w * std::exp(lq + s) * (lq - lp);
  }
  return acc * h / 3.0;
}

// log p(z) for x ~ N(0, 1) at t = 1, by grid quadrature over x.
double log_marginal_t1(double z, const ObservationChannel& ch) {
  const double lo = -20.0, hi = 20.0;
  const int n = 200000;
  const double h = (hi - lo) / n;
  double acc = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double x = lo + i * h;
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    acc += w * std::exp(-0.5 * x * x - 0.5 * std::log(2.0 * std::numbers::pi) + ch.log_likelihood(z, x));
  }
  return std::log(acc * h / 3.0);
}

}  // namespace

TEST_CASE("VariationalPosterior construction", "[variational]") {
  const VariationalPosterior vp(identity(3), GammaNoiseParams(0.5, 1.0));
  CHECK(vp.horizon() == 3);
  CHECK(vp.noise_mean_per_step() == std::vector<double>(3, 0.5));
  CHECK(vp.sign() == ResidualSign::as_printed);
  CHECK_THROWS_AS(VariationalPosterior(identity(3), std::vector<GammaNoiseParams>(2, GammaNoiseParams(1, 1))),
                  ConfigError);
  Matrix singular = Matrix::Zero(2, 2);
  CHECK_THROWS_AS(VariationalPosterior(CovarianceMatrix(singular), GammaNoiseParams(1, 1)), NumericError);
}

TEST_CASE("log_q_unnormalized examples", "[variational]") {
  const std::vector<double> x{0.0};
  const std::vector<double> z{1.0};
  const VariationalPosterior vp(identity(1), GammaNoiseParams(0.5, 1.0));
  CHECK(log_q_unnormalized(x, z, vp) == Approx(-0.41893853320467274).epsilon(1e-14));

  const auto model = reference_arma_models()[0].model;
  const VariationalPosterior arma(state_covariance(model, 4), GammaNoiseParams(3.0, 2.0));
  const std::vector<double> xs{0.2, -0.4, 1.1, 0.5};
  const Vector xv = Eigen::Map<const Vector>(xs.data(), 4);
  CHECK(log_q_unnormalized(xs, xs, arma) == arma.gaussian_log_density(xv));

  CHECK_THROWS_AS(log_q_unnormalized(xs, z, arma), ConfigError);
}

TEST_CASE("log_q_unnormalized residual term is linear in the noise mean", "[variational]") {
  const std::vector<double> x{0.3, -0.2};
  const std::vector<double> z{1.5, 0.4};
  const VariationalPosterior a(identity(2), GammaNoiseParams(0.5, 1.0));
  const VariationalPosterior b(identity(2), GammaNoiseParams(1.5, 1.0));
  const Vector xv = Eigen::Map<const Vector>(x.data(), 2);
  const double ra = log_q_unnormalized(x, z, a) - a.gaussian_log_density(xv);
  const double rb = log_q_unnormalized(x, z, b) - b.gaussian_log_density(xv);
  CHECK(rb == Approx(3.0 * ra).epsilon(1e-14));
  const VariationalPosterior neg(identity(2), GammaNoiseParams(0.5, 1.0), ResidualSign::likelihood);
  CHECK(log_q_unnormalized(x, z, neg) - neg.gaussian_log_density(xv) == Approx(-ra).epsilon(1e-14));
}

TEST_CASE("log_q_unnormalized limits by grid search", "[variational][property]") {
  const std::vector<double> z{1.3, -0.7};
  auto argmax = [&](const VariationalPosterior& vp) {
    std::vector<double> best{0.0, 0.0};
    double top = -INFINITY;
    for (int i = -300; i <= 300; ++i)
      for (int j = -300; j <= 300; ++j) {
        const std::vector<double> x{i * 0.01, j * 0.01};
        const double v = log_q_unnormalized(x, z, vp);
        if (v > top) {
          top = v;
          best = x;
        }
      }
    return best;
  };
  const auto data = argmax(VariationalPosterior(identity(2), GammaNoiseParams(1e4, 1.0), ResidualSign::likelihood));
  CHECK(data[0] == Approx(1.3).margin(1e-9));
  CHECK(data[1] == Approx(-0.7).margin(1e-9));
  for (auto sign : {ResidualSign::as_printed, ResidualSign::likelihood}) {
    const auto prior = argmax(VariationalPosterior(identity(2), GammaNoiseParams(1e-12, 1.0), sign));
    CHECK(prior[0] == Approx(0.0).margin(1e-9));
    CHECK(prior[1] == Approx(0.0).margin(1e-9));
  }
}

TEST_CASE("kl_gamma examples", "[variational]") {
  const GammaNoiseParams p(0.5, 1.0);
  CHECK(kl_gamma(p, p) == 0.0);
  CHECK(kl_gamma(GammaNoiseParams(1.0, 1.0), GammaNoiseParams(2.0, 1.0)) ==
        Approx(0.19314718055994531).margin(1e-9));
  CHECK(kl_quadrature(GammaNoiseParams(1.0, 1.0), GammaNoiseParams(2.0, 1.0)) ==
        Approx(0.19314718055994531).margin(1e-8));
}

TEST_CASE("kl_gamma is non-negative and matches quadrature", "[variational][oracle]") {
  Rng rng(31);
  std::uniform_real_distribution<double> pick(-2.0, 2.0);
  for (int i = 0; i < 100; ++i) {
    const GammaNoiseParams q(std::exp(pick(rng)), std::exp(pick(rng)));
    const GammaNoiseParams p(std::exp(pick(rng)), std::exp(pick(rng)));
    const double kl = kl_gamma(q, p);
    CHECK(kl >= 0.0);
    if (i % 10 == 0) {
      INFO("q=(" << q.alpha << "," << q.beta << ") p=(" << p.alpha << "," << p.beta << ")");
      CHECK(kl == Approx(kl_quadrature(q, p)).epsilon(1e-6).margin(1e-7));
    }
  }
}

TEST_CASE("fitness_estimate with matching noise laws has no KL term", "[variational]") {
  const ObservationChannel ch;
  const VariationalPosterior q(identity(3), ch.noise, ResidualSign::likelihood);
  const std::vector<double> z{0.4, 1.2, 0.1};
  Rng rng(3);
  const auto f = fitness_estimate(q, ch, z, 4000, rng);
  CHECK(f.kl_noise == 0.0);
  CHECK(f.value == f.expected_log_ratio);
  CHECK(f.samples == 4000);
  CHECK(std::isfinite(f.value));
  CHECK(f.standard_error > 0.0);
}

TEST_CASE("fitness_estimate respects the evidence bound at t = 1", "[variational][oracle]") {
  const ObservationChannel ch;
  for (double z : {0.05, 0.4, 1.0, 2.5}) {
    for (double alpha : {0.5, 2.0}) {
      const VariationalPosterior q(identity(1), GammaNoiseParams(alpha, 1.0), ResidualSign::likelihood);
      Rng rng(17);
      const std::vector<double> zs{z};
      const auto f = fitness_estimate(q, ch, zs, 20000, rng);
      const double bound = log_marginal_t1(z, ch);
      INFO("z=" << z << " alpha=" << alpha << " estimate=" << f.value << " bound=" << bound);
      CHECK(f.value <= bound + 3.0 * f.standard_error);
    }
  }
}

TEST_CASE("fitness_estimate standard error scales as one over root samples", "[variational]") {
  const ObservationChannel ch;
  const VariationalPosterior q(identity(2), GammaNoiseParams(1.0, 1.0), ResidualSign::likelihood);
  const std::vector<double> z{0.6, 0.9};
  Rng a(1), b(2);
  const auto small = fitness_estimate(q, ch, z, 5000, a);
  const auto large = fitness_estimate(q, ch, z, 10000, b);
  CHECK(large.standard_error / small.standard_error == Approx(1.0 / std::sqrt(2.0)).epsilon(0.2));
}

TEST_CASE("fitness_estimate errors", "[variational]") {
  const ObservationChannel ch;
  const std::vector<double> z{0.6, 0.9};
  Rng rng(1);
  // The printed sign with E[v] = 0.5 leaves the unit-covariance precision singular.
  const VariationalPosterior printed(identity(2), GammaNoiseParams(0.5, 1.0));
  CHECK_THROWS_AS(fitness_estimate(printed, ch, z, 100, rng), NumericError);
  const VariationalPosterior ok(identity(2), GammaNoiseParams(0.5, 1.0), ResidualSign::likelihood);
  CHECK_THROWS_AS(fitness_estimate(ok, ch, z, 0, rng), ConfigError);
  const std::vector<double> short_z{0.6};
  CHECK_THROWS_AS(fitness_estimate(ok, ch, short_z, 10, rng), ConfigError);
  // z = 0 with shape > 1 gives a -inf log likelihood in every sample.
  const ObservationChannel steep{ChannelKind::log_volatility, GammaNoiseParams(0.5, 2.0)};
  const std::vector<double> zero{0.0, 0.5};
  CHECK_THROWS_AS(fitness_estimate(ok, steep, zero, 10, rng), NumericError);
}
