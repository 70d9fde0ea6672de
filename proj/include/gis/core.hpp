#pragma once

// Dense symmetric linear algebra and Gaussian-belief primitives.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>

namespace gis {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

namespace tol {
/// Maximum |P - P^T| accepted as "symmetric" on input.
inline constexpr double kSymmetry = 1e-9;
/// Eigenvalues above -kPsd are treated as round-off and clamped to zero.
inline constexpr double kPsd = 1e-10;
/// Reconstruction tolerance of a spectral decomposition.
inline constexpr double kReconstruction = 1e-10;
}  // namespace tol

// Error hierarchy. Everything derives from gis::Error so callers can catch
// the whole family in one place.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidMatrix : public Error {
 public:
  using Error::Error;
};

class NotPsd : public Error {
 public:
  using Error::Error;
};

class NotSpd : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class InvalidParameter : public Error {
 public:
  using Error::Error;
};

/// Raised by the filter/smoother recursions; carries the 1-based step index.
class NumericalFailure : public Error {
 public:
  NumericalFailure(int step, const std::string& what)
      : Error("step " + std::to_string(step) + ": " + what), step_(step) {}

  int step() const noexcept { return step_; }

 private:
  int step_;
};

inline double max_abs(const Matrix& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

inline Matrix symmetrized(const Matrix& p) { return 0.5 * (p + p.transpose()); }

/**
 * Orthogonal eigen-decomposition P = basis * diag(eigenvalues) * basis^T.
 *
 * Eigenvalues are sorted in descending order and are nonnegative. Each
 * eigenvector is sign-normalised so that its first nonzero component is
 * positive.
 */
struct SpectralDecomposition {
  Matrix basis;
  Vector eigenvalues;

  Eigen::Index dim() const { return eigenvalues.size(); }

  Matrix reconstruct() const {
    return basis * eigenvalues.asDiagonal() * basis.transpose();
  }

  /// basis * diag(sqrt(eigenvalues)); a square root L with L L^T = P.
  Matrix sqrt_factor() const {
    return basis * eigenvalues.cwiseSqrt().asDiagonal();
  }
};

namespace detail {

inline void require_square(const Matrix& p, const char* who) {
  if (p.rows() != p.cols()) {
    throw InvalidMatrix(std::string(who) + ": matrix is " +
                        std::to_string(p.rows()) + "x" +
                        std::to_string(p.cols()) + ", expected square");
  }
}

inline void require_finite(const Matrix& p, const char* who) {
  if (!p.allFinite()) {
    throw InvalidMatrix(std::string(who) + ": non-finite entry");
  }
}

// Eigen's solver returns ascending order; reverse and normalise signs.
inline SpectralDecomposition sorted_decomposition(const Matrix& sym) {
  const Eigen::Index n = sym.rows();
  SpectralDecomposition out{Matrix(n, n), Vector(n)};
  if (n == 0) return out;
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym);
  if (solver.info() != Eigen::Success) {
    throw InvalidMatrix("spectral_decompose: eigen solver did not converge");
  }
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index src = n - 1 - k;
    out.eigenvalues(k) = solver.eigenvalues()(src);
    Vector v = solver.eigenvectors().col(src);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (v(i) != 0.0) {
        if (v(i) < 0.0) v = -v;
        break;
      }
    }
    out.basis.col(k) = v;
  }
  return out;
}

}  // namespace detail

/// Eigen-decomposition of a symmetric PSD matrix. Eigenvalues in
/// (-kPsd, 0) are clamped to zero; anything more negative is rejected.
inline SpectralDecomposition spectral_decompose(const Matrix& p) {
  detail::require_square(p, "spectral_decompose");
  detail::require_finite(p, "spectral_decompose");
  const double asym = max_abs(p - p.transpose());
  if (asym > tol::kSymmetry) {
    throw InvalidMatrix("spectral_decompose: asymmetric input (max |P-P^T| = " +
                        std::to_string(asym) + ")");
  }
  SpectralDecomposition out = detail::sorted_decomposition(symmetrized(p));
  for (Eigen::Index k = 0; k < out.dim(); ++k) {
    double& ev = out.eigenvalues(k);
    if (ev < -tol::kPsd) {
      throw NotPsd("spectral_decompose: eigenvalue " + std::to_string(ev) +
                   " below -" + std::to_string(tol::kPsd));
    }
    if (ev < 0.0) ev = 0.0;
  }
  return out;
}

/// Solves A X = B for symmetric positive-definite A without forming A^-1.
inline Matrix solve_spd(const Matrix& a, const Matrix& b) {
  detail::require_square(a, "solve_spd");
  if (a.rows() != b.rows()) {
    throw DimensionError("solve_spd: A is " + std::to_string(a.rows()) +
                         "x" + std::to_string(a.cols()) + " but B has " +
                         std::to_string(b.rows()) + " rows");
  }
  if (!a.allFinite() || !b.allFinite()) {
    throw NotSpd("solve_spd: non-finite input");
  }
  Eigen::LLT<Matrix> llt(symmetrized(a));
  if (llt.info() != Eigen::Success) {
    throw NotSpd("solve_spd: matrix is not positive definite");
  }
  // LLT succeeds on some numerically singular matrices; reject a vanishing pivot.
  const Vector pivots = Matrix(llt.matrixL()).diagonal();
  const double scale = std::max(1.0, a.diagonal().cwiseAbs().maxCoeff());
  if (pivots.minCoeff() <= 1e-14 * std::sqrt(scale)) {
    throw NotSpd("solve_spd: matrix is singular to working precision");
  }
  return llt.solve(b);
}

/// (P + P^T)/2 with negative eigenvalues clamped to zero. Returns the
/// symmetrised matrix untouched when it is already PSD.
inline Matrix symmetrize_and_project(const Matrix& p) {
  detail::require_square(p, "symmetrize_and_project");
  Matrix sym = symmetrized(p);
  if (sym.size() == 0 || !sym.allFinite()) return sym;
  SpectralDecomposition dec = detail::sorted_decomposition(sym);
  if (dec.eigenvalues.minCoeff() >= 0.0) return sym;
  dec.eigenvalues = dec.eigenvalues.cwiseMax(0.0);
  return symmetrized(dec.reconstruct());
}

/// Mean and covariance of a Gaussian state estimate. The covariance is
/// symmetrised on construction.
class GaussianBelief {
 public:
  GaussianBelief() = default;

  GaussianBelief(Vector mean, const Matrix& covariance)
      : mean_(std::move(mean)) {
    detail::require_square(covariance, "GaussianBelief");
    covariance_ = symmetrized(covariance);
    if (covariance.rows() != mean_.size()) {
      throw DimensionError("GaussianBelief: mean has length " +
                           std::to_string(mean_.size()) +
                           " but covariance is " +
                           std::to_string(covariance.rows()) + "x" +
                           std::to_string(covariance.cols()));
    }
  }

  const Vector& mean() const { return mean_; }
  const Matrix& covariance() const { return covariance_; }
  Eigen::Index dim() const { return mean_.size(); }

 private:
  Vector mean_;
  Matrix covariance_;
};

}  // namespace gis
