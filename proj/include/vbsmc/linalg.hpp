#ifndef VBSMC_LINALG_HPP
#define VBSMC_LINALG_HPP

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <span>
#include <string>

#include "vbsmc/error.hpp"

namespace vbsmc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Pairwise summation; result does not depend on how callers partition work.
inline double pairwise_sum(std::span<const double> values) {
  if (values.size() <= 16) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

/// Dense lower Cholesky factor L with A = L L^T. Throws FactorizationError
/// naming the first non-positive pivot.
inline Matrix cholesky_lower(const Matrix& a) {
  const Eigen::Index n = a.rows();
  if (a.cols() != n) throw ConfigError("cholesky_lower: matrix is not square");
  Matrix l = Matrix::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double diag = a(j, j);
    for (Eigen::Index k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
    if (!(diag > 0.0) || !std::isfinite(diag)) {
      throw FactorizationError("covariance is not numerically positive definite",
                               static_cast<std::size_t>(j));
    }
    const double ljj = std::sqrt(diag);
    l(j, j) = ljj;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (Eigen::Index k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  return l;
}

/// Symmetric positive semi-definite matrix. Construction validates symmetry
/// (relative 1e-12) and PSD-ness (eigenvalues >= -1e-10 * trace).
class CovarianceMatrix {
 public:
  explicit CovarianceMatrix(Matrix entries) : entries_(std::move(entries)) {
    if (entries_.rows() == 0 || entries_.rows() != entries_.cols()) {
      throw ConfigError("covariance matrix must be square with positive dimension");
    }
    const double scale = std::max(1.0, entries_.cwiseAbs().maxCoeff());
    const double asym = (entries_ - entries_.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-12 * scale) {
      throw NumericError("covariance matrix is not symmetric (max asymmetry " +
                         std::to_string(asym) + ")");
    }
    entries_ = 0.5 * (entries_ + entries_.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(entries_, Eigen::EigenvaluesOnly);
    const double floor = -1e-10 * std::max(entries_.trace(), 1e-300);
    if (eig.eigenvalues().minCoeff() < floor) {
      throw NumericError("covariance matrix is not positive semi-definite");
    }
  }

  std::size_t dim() const noexcept { return static_cast<std::size_t>(entries_.rows()); }
  const Matrix& matrix() const noexcept { return entries_; }
  double operator()(std::size_t i, std::size_t j) const {
    return entries_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }

 private:
  Matrix entries_;
};

}  // namespace vbsmc

#endif
