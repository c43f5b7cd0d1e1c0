#pragma once

#include <cmath>

#include <Eigen/Dense>

#include "ballistic/error.hpp"

namespace ballistic {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

template <int N>
using MatN = Eigen::Matrix<double, N, N>;

template <int N>
using VecN = Eigen::Matrix<double, N, 1>;

namespace tol {
// Module-level tolerances. Tests may shadow these by passing explicit values.
inline constexpr double antisymmetry = 1e-9;
inline constexpr double orthogonality = 1e-9;
inline constexpr double psd_clamp = 1e-12;
inline constexpr double psd_reject = 1e-9;
inline constexpr double singular_pivot = 1e-12;
}  // namespace tol

inline Mat3 hat(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

inline Vec3 unhat(const Mat3& m, double tolerance = tol::antisymmetry) {
  const Mat3 sym = 0.5 * (m + m.transpose());
  if (sym.cwiseAbs().maxCoeff() > tolerance) {
    throw Error(Errc::NotAntisymmetric, "matrix has a symmetric part of magnitude " +
                                            std::to_string(sym.cwiseAbs().maxCoeff()));
  }
  return Vec3(m(2, 1), m(0, 2), m(1, 0));
}

/// Orthogonality and unit-determinant check for rotation matrices.
inline bool is_rotation(const Mat3& r, double tolerance = tol::orthogonality) {
  return (r.transpose() * r - Mat3::Identity()).norm() <= tolerance &&
         std::abs(r.determinant() - 1.0) <= tolerance;
}

/// Cayley map cay(A) = (I - A/2)^{-1} (I + A/2) of the skew matrix hat(w).
inline Mat3 cayley(const Vec3& w) {
  const Mat3 a = 0.5 * hat(w);
  const Mat3 lhs = Mat3::Identity() - a;
  // det(I - hat(w)/2) = 1 + |w|^2/4 is never small in exact arithmetic; the
  // guard catches overflow and non-finite input.
  const double det = lhs.determinant();
  if (!std::isfinite(det) || std::abs(det) < tol::singular_pivot) {
    throw Error(Errc::SingularUpdate, "Cayley update is numerically singular");
  }
  return lhs.inverse() * (Mat3::Identity() + a);
}

inline Mat3 rotate_step(const Mat3& r, const Vec3& omega, double h) {
  if (!(h > 0.0)) throw Error(Errc::InvalidParameter, "rotate_step requires h > 0");
  return cayley(h * omega) * r;
}

/// Applies the same Cayley update to a single attitude vector (a column of R).
inline Vec3 rotate_vector_step(const Vec3& xi, const Vec3& omega, double h) {
  if (!(h > 0.0)) throw Error(Errc::InvalidParameter, "rotate_vector_step requires h > 0");
  return cayley(h * omega) * xi;
}

/// Symmetric positive semidefinite matrix; symmetric exactly by construction.
template <int N>
class SymPSDMatrix {
 public:
  SymPSDMatrix() : m_(MatN<N>::Zero()) {}

  explicit SymPSDMatrix(const MatN<N>& m) : m_(0.5 * (m + m.transpose())) {
    if (!m_.allFinite()) throw Error(Errc::NotPSD, "matrix has non-finite entries");
    if (min_eigenvalue() < -tol::psd_reject) {
      throw Error(Errc::NotPSD, "eigenvalue " + std::to_string(min_eigenvalue()) + " below zero");
    }
  }

  const MatN<N>& matrix() const { return m_; }
  double operator()(int i, int j) const { return m_(i, j); }

  VecN<N> eigenvalues() const {
    Eigen::SelfAdjointEigenSolver<MatN<N>> es(m_, Eigen::EigenvaluesOnly);
    return es.eigenvalues();
  }
  double min_eigenvalue() const { return eigenvalues().minCoeff(); }

 private:
  MatN<N> m_;
};

using SymPSD2 = SymPSDMatrix<2>;
using SymPSD4 = SymPSDMatrix<4>;

template <int N>
SymPSDMatrix<N> psd_sqrt(const SymPSDMatrix<N>& c) {
  Eigen::SelfAdjointEigenSolver<MatN<N>> es(c.matrix());
  VecN<N> lambda = es.eigenvalues();
  if (lambda.minCoeff() < -tol::psd_reject) {
    throw Error(Errc::NotPSD, "cannot take the square root of an indefinite matrix");
  }
  for (int i = 0; i < N; ++i) lambda(i) = std::sqrt(std::max(lambda(i), 0.0));
  const MatN<N>& q = es.eigenvectors();
  return SymPSDMatrix<N>(q * lambda.asDiagonal() * q.transpose());
}

}  // namespace ballistic
