#ifndef VBSMC_ARMA_HPP
#define VBSMC_ARMA_HPP

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "vbsmc/error.hpp"
#include "vbsmc/fgn.hpp"
#include "vbsmc/linalg.hpp"
#include "vbsmc/rng.hpp"

namespace vbsmc {

/// ARMA(m, n) driven by fractional Gaussian innovations:
/// x_t = sum_i ar[i-1] x_{t-i} + sum_j ma[j-1] u_{t-j} + u_t.
struct ArmaModel {
  std::vector<double> ar;
  std::vector<double> ma;
  FgnSpec innovations;

  ArmaModel(std::vector<double> ar_coeffs, std::vector<double> ma_coeffs, FgnSpec spec)
      : ar(std::move(ar_coeffs)), ma(std::move(ma_coeffs)), innovations(spec) {
    for (double c : ar)
      if (!std::isfinite(c)) throw ConfigError("AR coefficients must be finite");
    for (double c : ma)
      if (!std::isfinite(c)) throw ConfigError("MA coefficients must be finite");
  }

  std::size_t ar_order() const noexcept { return ar.size(); }
  std::size_t ma_order() const noexcept { return ma.size(); }

  std::string label() const {
    if (ma.empty() && !ar.empty()) return "AR(" + std::to_string(ar.size()) + ")";
    if (ar.empty() && !ma.empty()) return "MA(" + std::to_string(ma.size()) + ")";
    return "ARMA(" + std::to_string(ar.size()) + "," + std::to_string(ma.size()) + ")";
  }
};

/// Deterministic part of the recursion at zero-based position `t`, given the
/// oldest-first histories x_{0..t-1} and u_{0..t-1}. Values before the start
/// are zero.
inline double arma_drift(const ArmaModel& model, std::span<const double> states,
                         std::span<const double> innovations, std::size_t t) {
  double ar_sum = 0.0;
  for (std::size_t i = 1; i <= model.ar.size() && i <= t; ++i) ar_sum += model.ar[i - 1] * states[t - i];
  double ma_sum = 0.0;
  for (std::size_t j = 1; j <= model.ma.size() && j <= t; ++j)
    ma_sum += model.ma[j - 1] * innovations[t - j];
  return ar_sum + ma_sum;
}

/// The models used in the reference simulation study, unit innovation variance.
struct NamedArmaModel {
  std::string name;
  ArmaModel model;
};

inline std::vector<NamedArmaModel> reference_arma_models() {
  auto spec = [](double h) { return FgnSpec(HurstExponent(h), 1.0); };
  return {
      {"ARMA(1,1)", ArmaModel({0.85}, {0.8}, spec(0.7))},
      {"ARMA(2,1)", ArmaModel({0.49, 0.49}, {0.8}, spec(0.8))},
      {"AR(1)", ArmaModel({0.6}, {}, spec(0.7))},
      {"MA(1)", ArmaModel({}, {0.5}, spec(0.7))},
      {"AR(2)", ArmaModel({0.49, 0.45}, {}, spec(0.8))},
      {"MA(2)", ArmaModel({}, {0.49, 0.47}, spec(0.8))},
  };
}

enum class BandOrdering {
  /// x_{1:t} stored oldest first; bands sit below the diagonal.
  oldest_first_lower,
};

/// Phi x = Psi u over a horizon, zero initial conditions.
struct TransitionMatrices {
  Matrix phi;
  Matrix psi;
  BandOrdering ordering = BandOrdering::oldest_first_lower;

  std::size_t horizon() const noexcept { return static_cast<std::size_t>(phi.rows()); }
};

inline TransitionMatrices build_transition_matrices(const ArmaModel& model, std::size_t t) {
  if (t == 0) throw ConfigError("transition matrices need horizon >= 1");
  const auto n = static_cast<Eigen::Index>(t);
  TransitionMatrices tm{Matrix::Identity(n, n), Matrix::Identity(n, n)};
  for (Eigen::Index row = 0; row < n; ++row) {
    for (std::size_t k = 1; k <= model.ar.size(); ++k) {
      const Eigen::Index col = row - static_cast<Eigen::Index>(k);
      if (col >= 0) tm.phi(row, col) = -model.ar[k - 1];
    }
    for (std::size_t k = 1; k <= model.ma.size(); ++k) {
      const Eigen::Index col = row - static_cast<Eigen::Index>(k);
      if (col >= 0) tm.psi(row, col) = model.ma[k - 1];
    }
  }
  return tm;
}

/// Theta = Phi^{-1} Psi by unit-lower triangular solve.
inline Matrix transfer_matrix(const TransitionMatrices& tm) {
  return tm.phi.triangularView<Eigen::UnitLower>().solve(tm.psi);
}

struct LatentTrajectory {
  std::vector<double> states;
  std::vector<double> innovations;
};

/// Runs the recursion on a given innovation sequence.
inline std::vector<double> arma_filter_innovations(const ArmaModel& model,
                                                   std::span<const double> innovations) {
  std::vector<double> x(innovations.size());
  for (std::size_t t = 0; t < innovations.size(); ++t)
    x[t] = arma_drift(model, x, innovations, t) + innovations[t];
  return x;
}

/// Draws u_{1:t} jointly from the fGn law and applies the recursion.
inline LatentTrajectory simulate_recursive(const ArmaModel& model, std::size_t t, Rng& rng) {
  if (t == 0) throw ConfigError("simulation horizon must be >= 1");
  LatentTrajectory out;
  out.innovations = sample_fgn(t, model.innovations, rng);
  out.states = arma_filter_innovations(model, out.innovations);
  return out;
}

/// C_x = Theta C_u Theta^T.
inline CovarianceMatrix state_covariance(const ArmaModel& model, std::size_t t) {
  const Matrix theta = transfer_matrix(build_transition_matrices(model, t));
  const Matrix cu = fgn_covariance(t, model.innovations).matrix();
  return CovarianceMatrix(theta * cu * theta.transpose());
}

}  // namespace vbsmc

#endif
