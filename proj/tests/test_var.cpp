#include <catch_amalgamated.hpp>

#include <cmath>
#include <cstring>
#include <vector>

#include "stats.hpp"
#include "vbsmc/var.hpp"

using namespace vbsmc;
using Catch::Approx;

namespace {

FgnSpec spec(double h, double s2 = 1.0) { return FgnSpec(HurstExponent(h), s2); }

Matrix persistent_weights(Eigen::Index n) {
  Matrix w = Matrix::Constant(n, n, 0.05);
  w.diagonal().setConstant(0.8);
  return w;
}

std::vector<std::string> labels(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t k = 0; k < n; ++k) out.push_back("s" + std::to_string(k + 1));
  return out;
}

// Observation matrix z = v e^{x/2} for a latent n x T matrix.
Matrix observe_all(const Matrix& x, const ObservationChannel& ch, Rng& rng) {
  Matrix z(x.rows(), x.cols());
  for (Eigen::Index t = 0; t < x.cols(); ++t)
    for (Eigen::Index k = 0; k < x.rows(); ++k) z(k, t) = ch.sample(x(k, t), rng);
  return z;
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

}  // namespace

TEST_CASE("VarModel validation", "[var]") {
  CHECK_THROWS_AS(VarModel({}, spec(0.7)), ConfigError);
  CHECK_THROWS_AS(VarModel({Matrix::Zero(2, 2), Matrix::Zero(3, 3)}, spec(0.7)), ConfigError);
  CHECK_THROWS_AS(VarModel({Matrix::Zero(2, 3)}, spec(0.7)), ConfigError);
  CHECK_THROWS_AS(VarModel({Matrix::Constant(2, 2, NAN)}, spec(0.7)), ConfigError);
  const VarModel m({Matrix::Zero(3, 3), Matrix::Zero(3, 3)}, spec(0.7));
  CHECK(m.order() == 2);
  CHECK(m.dim() == 3);
  CHECK(m.label() == "VAR(2)x3");
}

TEST_CASE("simulate_var examples", "[var]") {
  SECTION("zero weights pass the innovations through") {
    const VarModel m({Matrix::Zero(3, 3)}, spec(0.7));
    Rng a(1), b(1);
    const Matrix x = simulate_var(m, 20, a);
    FgnSampler sampler(20, spec(0.7));
    for (Eigen::Index k = 0; k < 3; ++k) {
      const auto u = sampler.draw(b);
      for (Eigen::Index t = 0; t < 20; ++t) CHECK(x(k, t) == u[static_cast<std::size_t>(t)]);
    }
  }
  SECTION("scalar VAR(1) equals AR(1) on the same innovations") {
    const VarModel m({Matrix::Constant(1, 1, 0.6)}, spec(0.7));
    Rng a(2), b(2);
    const Matrix x = simulate_var(m, 40, a);
    const auto traj = simulate_recursive(ArmaModel({0.6}, {}, spec(0.7)), 40, b);
    for (Eigen::Index t = 0; t < 40; ++t) CHECK(x(0, t) == traj.states[static_cast<std::size_t>(t)]);
  }
  SECTION("zero variance gives zeros") {
    const VarModel m({persistent_weights(4)}, spec(0.7, 0.0));
    Rng rng(3);
    CHECK(simulate_var(m, 10, rng).isZero(0.0));
    CHECK_THROWS_AS(simulate_var(m, 0, rng), ConfigError);
  }
}

TEST_CASE("Dataset validation", "[var]") {
  auto d = Dataset::fully_observed(Matrix::Constant(2, 3, 1.0), labels(2));
  CHECK_NOTHROW(d.validate());
  d.series(1, 2) = -1.0;
  CHECK_THROWS_AS(d.validate(), DataError);
  d.missing(1, 2) = true;
  CHECK_NOTHROW(d.validate());
  d.labels.pop_back();
  CHECK_THROWS_AS(d.validate(), DataError);
}

TEST_CASE("scalar VAR filtering reproduces the AR(1) filter", "[var]") {
  const ArmaModel ar({0.6}, {}, spec(0.7));
  const VarModel var({Matrix::Constant(1, 1, 0.6)}, spec(0.7));
  FilterConfig cfg;
  cfg.n_particles = 400;
  cfg.seed = 21;
  Rng rng(21);
  const auto traj = simulate_recursive(ar, 50, rng);
  std::vector<double> z;
  for (double x : traj.states) z.push_back(cfg.channel.sample(x, rng));
  for (auto scheme : {ResamplingScheme::paper, ResamplingScheme::systematic}) {
    cfg.resampling = scheme;
    const auto scalar = run_filter(ar, cfg, z, std::span<const double>(traj.states));
    Matrix zm(1, 50), xm(1, 50);
    for (Eigen::Index t = 0; t < 50; ++t) {
      zm(0, t) = z[static_cast<std::size_t>(t)];
      xm(0, t) = traj.states[static_cast<std::size_t>(t)];
    }
    const auto reports = filter_dataset(var, Dataset::fully_observed(zm, {"x"}), cfg, xm);
    REQUIRE(reports.size() == 1);
    const auto& joint = reports[0];
    for (std::size_t t = 0; t < 50; ++t) {
      CHECK(same_bits(joint.estimates[t], scalar.estimates[t]));
      CHECK(same_bits(joint.predicted_observations[t], scalar.predicted_observations[t]));
      CHECK(same_bits(joint.ess_trace[t], scalar.ess_trace[t]));
      CHECK(joint.resample_counts[t] == scalar.resample_counts[t]);
      CHECK(same_bits((*joint.rmse_trace)[t], (*scalar.rmse_trace)[t]));
    }
  }
}

TEST_CASE("diagonal weights decouple into scalar filters", "[var][slow]") {
  // The joint filter and two separate scalar filters target the same
  // marginal posteriors; compare their gap to the seed-to-seed noise.
  Matrix w = Matrix::Zero(2, 2);
  w.diagonal() << 0.7, 0.5;
  const VarModel var({w}, spec(0.7));
  FilterConfig cfg;
  cfg.n_particles = 4000;
  Rng rng(8);
  const Matrix x = simulate_var(var, 30, rng);
  const Matrix z = observe_all(x, cfg.channel, rng);
  const auto joint = filter_dataset(var, Dataset::fully_observed(z, labels(2)), cfg);
  double gap = 0.0, noise = 0.0;
  for (Eigen::Index k = 0; k < 2; ++k) {
    const ArmaModel ar({w(k, k)}, {}, spec(0.7));
    std::vector<double> zk(30);
    for (Eigen::Index t = 0; t < 30; ++t) zk[static_cast<std::size_t>(t)] = z(k, t);
    FilterConfig a = cfg, b = cfg;
    a.seed = 100;
    b.seed = 200;
    const auto ra = run_filter(ar, a, zk);
    const auto rb = run_filter(ar, b, zk);
    for (std::size_t t = 0; t < 30; ++t) {
      gap += std::abs(joint[static_cast<std::size_t>(k)].estimates[t] - ra.estimates[t]);
      noise += std::abs(rb.estimates[t] - ra.estimates[t]);
    }
  }
  INFO("gap " << gap / 60.0 << " noise " << noise / 60.0);
  CHECK(gap <= 3.0 * noise);
}

TEST_CASE("fully masked steps are prediction-only", "[var]") {
  const VarModel var({persistent_weights(3)}, spec(0.7));
  FilterConfig cfg;
  cfg.n_particles = 300;
  Rng rng(9);
  const Matrix x = simulate_var(var, 20, rng);
  auto data = Dataset::fully_observed(observe_all(x, cfg.channel, rng), labels(3));
  for (Eigen::Index k = 0; k < 3; ++k) data.missing(k, 7) = true;

  std::vector<std::vector<double>> after_resample, after_reweight;
  std::vector<double> prediction;
  const auto reports = filter_dataset(var, data, cfg, std::nullopt, [&](const ParticleCloud& c, FilterStage s) {
    if (s == FilterStage::reweighted) {
      after_reweight.push_back(c.weights());
      if (c.steps() == 8) prediction.push_back(estimate(c, 1));
    } else {
      after_resample.push_back(c.weights());
    }
  });
  REQUIRE(after_reweight.size() == 20);
  CHECK(after_reweight[7] == after_resample[6]);
  CHECK(after_reweight[8] != after_resample[7]);
  REQUIRE(prediction.size() == 1);
  CHECK(reports[1].estimates[7] == prediction[0]);
}

TEST_CASE("filter_dataset errors", "[var]") {
  const VarModel var({persistent_weights(3)}, spec(0.7));
  FilterConfig cfg;
  cfg.n_particles = 10;
  const auto data = Dataset::fully_observed(Matrix::Constant(2, 5, 0.5), labels(2));
  CHECK_THROWS_AS(filter_dataset(var, data, cfg), ConfigError);
  const auto ok = Dataset::fully_observed(Matrix::Constant(3, 5, 0.5), labels(3));
  CHECK_THROWS_AS(filter_dataset(var, ok, cfg, Matrix::Zero(3, 4)), DataError);
}

TEST_CASE("impute contracts", "[var]") {
  const VarModel var({persistent_weights(3)}, spec(0.7));
  FilterConfig cfg;
  cfg.n_particles = 300;
  Rng rng(10);
  const Matrix x = simulate_var(var, 24, rng);
  const Matrix z = observe_all(x, cfg.channel, rng);

  SECTION("empty mask leaves the data unchanged") {
    const auto data = Dataset::fully_observed(z, labels(3));
    const auto out = impute(filter_dataset(var, data, cfg), data);
    CHECK(out.series == data.series);
    CHECK(!out.missing.any());
  }
  SECTION("observed cells are untouched and masked cells are filled") {
    auto data = Dataset::fully_observed(z, labels(3));
    Rng mask_rng(11);
    CHECK(mask_random_cells(data, 0.25, mask_rng) == 18);
    const auto reports = filter_dataset(var, data, cfg);
    const auto out = impute(reports, data);
    CHECK(!out.missing.any());
    for (Eigen::Index k = 0; k < 3; ++k)
      for (Eigen::Index t = 0; t < 24; ++t) {
        if (data.missing(k, t)) {
          CHECK(out.series(k, t) == reports[static_cast<std::size_t>(k)].predicted_observations[static_cast<std::size_t>(t)]);
          CHECK(out.series(k, t) >= 0.0);
        } else {
          CHECK(same_bits(out.series(k, t), z(k, t)));
        }
      }
  }
  SECTION("an all-masked series takes the predicted trace") {
    auto data = Dataset::fully_observed(z, labels(3));
    data.missing.row(2).setConstant(true);
    const auto reports = filter_dataset(var, data, cfg);
    const auto out = impute(reports, data);
    for (Eigen::Index t = 0; t < 24; ++t)
      CHECK(out.series(2, t) == reports[2].predicted_observations[static_cast<std::size_t>(t)]);
  }
  SECTION("re-masking and re-imputing with the same seed is reproducible") {
    auto data = Dataset::fully_observed(z, labels(3));
    Rng m1(12);
    mask_random_cells(data, 0.2, m1);
    const auto first = impute(filter_dataset(var, data, cfg), data);
    auto again = first;
    again.missing = data.missing;
    const auto second = impute(filter_dataset(var, again, cfg), again);
    CHECK(first.series == second.series);
  }
  SECTION("shape mismatch is rejected") {
    const auto data = Dataset::fully_observed(z, labels(3));
    auto reports = filter_dataset(var, data, cfg);
    reports.pop_back();
    CHECK_THROWS_AS(impute(reports, data), DataError);
  }
}

TEST_CASE("mask_random_cells", "[var]") {
  auto data = Dataset::fully_observed(Matrix::Constant(4, 10, 1.0), labels(4));
  Rng rng(13);
  CHECK(mask_random_cells(data, 0.1, rng) == 4);
  CHECK(data.missing.count() == 4);
  CHECK_THROWS_AS(mask_random_cells(data, 1.0, rng), ConfigError);
  CHECK_THROWS_AS(mask_random_cells(data, -0.1, rng), ConfigError);
  // Same stream, larger fraction: the smaller mask is a subset.
  auto small = Dataset::fully_observed(Matrix::Constant(4, 10, 1.0), labels(4));
  auto large = small;
  Rng a(14), b(14);
  mask_random_cells(small, 0.2, a);
  mask_random_cells(large, 0.5, b);
  CHECK((small.missing && !large.missing).count() == 0);
}

TEST_CASE("score_imputation arithmetic", "[var]") {
  Dataset masked = Dataset::fully_observed(Matrix::Zero(1, 4), {"a"});
  masked.series << 1.0, 3.0, 0.0, 0.0;
  masked.missing(0, 2) = masked.missing(0, 3) = true;
  Dataset imputed = masked;
  imputed.series(0, 2) = 4.0;
  imputed.series(0, 3) = 2.0;
  Matrix complete(1, 4);
  complete << 1.0, 3.0, 5.0, 2.0;
  const auto s = score_imputation(masked, imputed, complete);
  CHECK(s.cells == 2);
  CHECK(s.rmse == Approx(std::sqrt(0.5)));
  CHECK(s.baseline_rmse == Approx(std::sqrt((9.0 + 0.0) / 2.0)));
  CHECK_THROWS_AS(score_imputation(masked, imputed, Matrix::Zero(2, 4)), DataError);
}

TEST_CASE("imputation error grows with the masked fraction", "[var][slow]") {
  // Nested masks from one stream; every fraction is scored on the cells of
  // the smallest mask so the comparison is like for like. The target is the
  // noise-free mean E[z | x], which keeps the observation noise out of the score.
  const VarModel var({persistent_weights(4)}, spec(0.7));
  FilterConfig cfg;
  cfg.n_particles = 500;
  const std::vector<double> fractions{0.1, 0.2, 0.3, 0.4, 0.5};
  std::vector<double> xs, ys;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng = make_stream(seed, StreamTag::innovations);
    const Matrix x = simulate_var(var, 48, rng);
    const Matrix z = observe_all(x, cfg.channel, rng);
    std::vector<double> errs;
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> core;
    for (double f : fractions) {
      auto data = Dataset::fully_observed(z, labels(4));
      Rng mask_rng = make_stream(seed, StreamTag::masking);
      mask_random_cells(data, f, mask_rng);
      if (core.size() == 0) core = data.missing;
      REQUIRE((core && !data.missing).count() == 0);
      cfg.seed = seed;
      const auto out = impute(filter_dataset(var, data, cfg), data);
      double se = 0.0;
      for (Eigen::Index k = 0; k < 4; ++k)
        for (Eigen::Index t = 0; t < 48; ++t)
          if (core(k, t)) {
            const double e = out.series(k, t) - cfg.channel.expected_observation(x(k, t));
            se += e * e;
          }
      errs.push_back(std::sqrt(se / static_cast<double>(core.count())));
    }
    const double centre = test::mean(errs);
    for (std::size_t i = 0; i < fractions.size(); ++i) {
      xs.push_back(fractions[i]);
      ys.push_back(errs[i] - centre);
    }
  }
  const double rho = test::spearman(xs, ys);
  // One-sided 5% critical value for n = 100 pairs.
  INFO("spearman rho = " << rho);
  CHECK(rho > 1.645 / std::sqrt(99.0));
}
