#pragma once

// Small dense symmetric matrices and the covariance maps used by the tracking
// filter and the performance bound: the measurement update map S, the
// attenuation-weighted matrix Q with its determinant q, and h.

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "beamtrack/errors.hpp"

namespace beamtrack {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Matrix2 = Eigen::Matrix2d;
using Vector2 = Eigen::Vector2d;

/// Dense symmetric matrix. Construction checks symmetry and stores (M+M^T)/2.
class SymMat {
 public:
  SymMat() = default;

  explicit SymMat(Matrix m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols() || m_.rows() == 0) {
      throw ValidationError("SymMat: expected a non-empty square matrix, got " +
                            std::to_string(m_.rows()) + "x" + std::to_string(m_.cols()));
    }
    for (Eigen::Index i = 0; i < m_.rows(); ++i) {
      for (Eigen::Index j = i + 1; j < m_.cols(); ++j) {
        const double tol = 1e-12 * std::max(1.0, std::abs(m_(i, j)));
        if (!(std::abs(m_(i, j) - m_(j, i)) <= tol)) {
          throw ValidationError("SymMat: matrix is not symmetric at (" + std::to_string(i) + "," +
                                std::to_string(j) + ")");
        }
      }
    }
    symmetrize();
  }

  static SymMat identity(Eigen::Index n) { return scalar(n, 1.0); }
  static SymMat zero(Eigen::Index n) { return scalar(n, 0.0); }
  static SymMat scalar(Eigen::Index n, double s) {
    return SymMat(Matrix(s * Matrix::Identity(n, n)), trusted);
  }

  // Symmetrizes an arbitrary square matrix without the tolerance check.
  static SymMat symmetric_part(const Matrix& m) { return SymMat(Matrix(m), trusted); }

  [[nodiscard]] Eigen::Index dim() const { return m_.rows(); }
  [[nodiscard]] const Matrix& matrix() const { return m_; }
  [[nodiscard]] double operator()(Eigen::Index i, Eigen::Index j) const { return m_(i, j); }
  [[nodiscard]] double trace() const { return m_.trace(); }

  friend SymMat operator+(const SymMat& x, const SymMat& y) {
    return SymMat(Matrix(x.m_ + y.m_), trusted);
  }
  friend SymMat operator-(const SymMat& x, const SymMat& y) {
    return SymMat(Matrix(x.m_ - y.m_), trusted);
  }
  friend SymMat operator*(double s, const SymMat& x) { return SymMat(Matrix(s * x.m_), trusted); }
  friend bool operator==(const SymMat& x, const SymMat& y) {
    return x.m_.rows() == y.m_.rows() && x.m_ == y.m_;
  }

 private:
  struct Trusted {};
  static constexpr Trusted trusted{};

  SymMat(Matrix m, Trusted) : m_(std::move(m)) {
    if (m_.rows() != m_.cols()) throw ValidationError("SymMat: matrix is not square");
    symmetrize();
  }

  void symmetrize() {
    const Matrix t = m_.transpose();
    m_ = 0.5 * (m_ + t);
  }

  Matrix m_;
};

/// Pivoted LDL^T test. Pivots must exceed 1e-14 * trace / dim.
[[nodiscard]] inline bool is_positive_definite(const SymMat& m) {
  const double floor = std::max(0.0, 1e-14 * m.trace() / static_cast<double>(m.dim()));
  Eigen::LDLT<Matrix> ldlt(m.matrix());
  if (ldlt.info() != Eigen::Success) return false;
  const Vector d = ldlt.vectorD();
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (!(d(i) > floor)) return false;
  }
  return true;
}

namespace detail {

inline void require_measurement_shape(const SymMat& sigma, const Matrix& c, const char* who) {
  if (c.rows() != 2 || c.cols() != sigma.dim()) {
    throw ValidationError(std::string(who) + ": C must be 2x" + std::to_string(sigma.dim()));
  }
}

inline bool is_pd_2x2(const Matrix2& m) {
  return m(0, 0) > 0.0 && m.determinant() > 0.0 && std::isfinite(m.determinant());
}

}  // namespace detail

/// S(Sigma) = Sigma - Sigma C^T (C Sigma C^T + R)^{-1} C Sigma.
[[nodiscard]] inline SymMat s_map(const SymMat& sigma, const Matrix& c, const SymMat& r) {
  detail::require_measurement_shape(sigma, c, "s_map");
  if (r.dim() != 2) throw ValidationError("s_map: R must be 2x2");
  const Matrix cs = c * sigma.matrix();  // 2 x n
  const Matrix2 k = cs * c.transpose() + r.matrix();
  if (!detail::is_pd_2x2(k)) {
    throw NumericError("s_map: C Sigma C^T + R is singular or indefinite");
  }
  const Matrix kinv_cs = k.llt().solve(cs);  // 2 x n
  return SymMat::symmetric_part(sigma.matrix() - cs.transpose() * kinv_cs);
}

/// X with X X = M^{-1} for a 2x2 positive definite M, from the closed-form
/// eigendecomposition.
[[nodiscard]] inline Matrix2 inv_sqrt_2x2(const Matrix2& m) {
  const double a = m(0, 0);
  const double b = 0.5 * (m(0, 1) + m(1, 0));
  const double c = m(1, 1);
  const double det = a * c - b * b;
  if (!(a > 0.0) || !(det > 0.0) || !std::isfinite(det)) {
    throw DomainError("inv_sqrt_2x2: matrix is not positive definite");
  }
  const double half_gap = 0.5 * (a - c);
  const double disc = std::hypot(half_gap, b);
  const double lambda1 = 0.5 * (a + c) + disc;
  const double lambda2 = det / lambda1;
  if (disc == 0.0) return Matrix2::Identity() / std::sqrt(a);

  // Eigenvector for lambda1; pick the better-conditioned of the two forms.
  Vector2 v = (a >= c) ? Vector2(lambda1 - c, b) : Vector2(b, lambda1 - a);
  v.normalize();
  const Matrix2 p = v * v.transpose();
  return p / std::sqrt(lambda1) + (Matrix2::Identity() - p) / std::sqrt(lambda2);
}

[[nodiscard]] inline Matrix2 inv_sqrt_2x2(const SymMat& m) {
  if (m.dim() != 2) throw ValidationError("inv_sqrt_2x2: expected a 2x2 matrix");
  return inv_sqrt_2x2(Matrix2(m.matrix()));
}

struct Attenuation {
  Matrix2 Q;  // (I + 2 rho C Sigma C^T)^{-1/2}
  double q;   // det Q
};

[[nodiscard]] inline Attenuation q_and_Q(const SymMat& sigma, const Matrix& c, double rho) {
  detail::require_measurement_shape(sigma, c, "q_and_Q");
  if (!(rho >= 0.0)) throw DomainError("q_and_Q: rho must be nonnegative");
  const Matrix2 k = Matrix2::Identity() + 2.0 * rho * (c * sigma.matrix() * c.transpose());
  const Matrix2 q_mat = inv_sqrt_2x2(k);
  return {q_mat, q_mat.determinant()};
}

/// h(Sigma) = det(I + 2 rho C Sigma C^T)^{-1/2}.
[[nodiscard]] inline double h(const SymMat& sigma, const Matrix& c, double rho) {
  detail::require_measurement_shape(sigma, c, "h");
  const Matrix2 k = Matrix2::Identity() + 2.0 * rho * (c * sigma.matrix() * c.transpose());
  return 1.0 / std::sqrt(k.determinant());
}

}  // namespace beamtrack
