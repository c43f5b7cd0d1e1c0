#pragma once

// Point-dipole fields and ring assemblies.
//
// Moments use the folded convention: a dipole's `moment` already carries the
// mu/(4 pi) prefactor (units T*m^3), so the field of a dipole is
// (3 (r.m) r - |r|^2 m) / |r|^5 with no further constant. The energy of a
// second dipole with folded moment n in that field is -(n/k).B, where
// k = FieldConstants::mu_over_4pi unfolds the receiving moment back to A*m^2.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "ballistic/error.hpp"
#include "ballistic/so3.hpp"

namespace ballistic {

inline constexpr double kSingularRadius = 1e-9;  // m

struct FieldConstants {
  double mu_over_4pi = 1e-7;  // T*m/A, vacuum permeability over 4 pi
};

struct Dipole {
  Vec3 position = Vec3::Zero();
  Vec3 moment = Vec3::Zero();
};

struct RingSpec {
  double radius = 0.34;
  double height = 0.20;
  int count = 20;
  double tilt = 0.0;     // phi_R: angle between the ring normal and e_z
  double azimuth = 0.0;  // theta_R: azimuth of the ring normal
  double moment = 1e-5;  // folded moment magnitude, T*m^3

  void validate() const {
    if (!(radius > 0.0)) throw Error(Errc::ValidationError, "ring radius must be positive");
    if (count < 1) throw Error(Errc::ValidationError, "ring needs at least one dipole");
    if (!std::isfinite(height) || !std::isfinite(tilt) || !std::isfinite(azimuth) || !std::isfinite(moment)) {
      throw Error(Errc::ValidationError, "ring parameters must be finite");
    }
  }

  /// Rotation taking the untilted ring frame to the tilted one: a tilt by
  /// `tilt` about the horizontal axis perpendicular to the azimuth direction.
  Mat3 attitude() const {
    const Eigen::AngleAxisd undo(-azimuth, Vec3::UnitZ());
    const Eigen::AngleAxisd lean(tilt, Vec3::UnitY());
    const Eigen::AngleAxisd redo(azimuth, Vec3::UnitZ());
    return (redo * lean * undo).toRotationMatrix();
  }

  Vec3 normal() const { return attitude().col(2); }
  Vec3 center() const { return Vec3(0.0, 0.0, height); }
};

inline void require_regular(const Vec3& r) {
  if (!(r.norm() >= kSingularRadius)) {
    throw Error(Errc::SingularFieldPoint, "field point within 1e-9 m of a dipole");
  }
}

/// Field at offset r from a dipole with folded moment m.
inline Vec3 dipole_field(const Vec3& r, const Vec3& m) {
  require_regular(r);
  const double r2 = r.squaredNorm();
  const double inv_r = 1.0 / std::sqrt(r2);
  const double inv_r5 = inv_r * inv_r * inv_r * inv_r * inv_r;
  return inv_r5 * (3.0 * r.dot(m) * r - r2 * m);
}

/// d B_a / d r_b of dipole_field.
inline Mat3 dipole_field_jacobian(const Vec3& r, const Vec3& m) {
  require_regular(r);
  const double r2 = r.squaredNorm();
  const double inv_r2 = 1.0 / r2;
  const double inv_r5 = inv_r2 * inv_r2 / std::sqrt(r2);
  const double rm = r.dot(m);
  Mat3 j = (m * r.transpose() + r * m.transpose() + rm * Mat3::Identity()) * 3.0;
  j.noalias() -= (15.0 * rm * inv_r2) * (r * r.transpose());
  return inv_r5 * j;
}

/// Field and Jacobian together (shares the distance computations).
struct FieldAndJacobian {
  Vec3 field = Vec3::Zero();
  Mat3 jacobian = Mat3::Zero();
};

inline FieldAndJacobian dipole_field_and_jacobian(const Vec3& r, const Vec3& m) {
  require_regular(r);
  const double r2 = r.squaredNorm();
  const double inv_r2 = 1.0 / r2;
  const double inv_r5 = inv_r2 * inv_r2 / std::sqrt(r2);
  const double rm = r.dot(m);
  FieldAndJacobian out;
  out.field = inv_r5 * (3.0 * rm * r - r2 * m);
  out.jacobian = (m * r.transpose() + r * m.transpose() + rm * Mat3::Identity()) * (3.0 * inv_r5);
  out.jacobian.noalias() -= (15.0 * rm * inv_r2 * inv_r5) * (r * r.transpose());
  return out;
}

/// Unit radial directions and in-plane positions of an untilted ring
/// (dipole k at angle 2 pi k / N), before attitude and translation.
inline std::vector<Vec3> ring_reference_directions(int count) {
  std::vector<Vec3> dirs;
  dirs.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    const double a = 2.0 * std::numbers::pi * k / count;
    dirs.emplace_back(std::cos(a), std::sin(a), 0.0);
  }
  return dirs;
}

/// N dipoles equally spaced on the ring with outward radial moments.
inline std::vector<Dipole> build_ring(const RingSpec& spec) {
  spec.validate();
  const Mat3 att = spec.attitude();
  std::vector<Dipole> out;
  for (const Vec3& u : ring_reference_directions(spec.count)) {
    const Vec3 dir = att * u;
    out.push_back({spec.center() + spec.radius * dir, spec.moment * dir});
  }
  return out;
}

inline Vec3 assembly_field(std::span<const Dipole> dipoles, const Vec3& x) {
  Vec3 b = Vec3::Zero();
  for (const auto& d : dipoles) b += dipole_field(x - d.position, d.moment);
  return b;
}

inline Mat3 assembly_jacobian(std::span<const Dipole> dipoles, const Vec3& x) {
  Mat3 j = Mat3::Zero();
  for (const auto& d : dipoles) j += dipole_field_jacobian(x - d.position, d.moment);
  return j;
}

inline FieldAndJacobian assembly_field_and_jacobian(std::span<const Dipole> dipoles, const Vec3& x) {
  FieldAndJacobian acc;
  for (const auto& d : dipoles) {
    const auto fj = dipole_field_and_jacobian(x - d.position, d.moment);
    acc.field += fj.field;
    acc.jacobian += fj.jacobian;
  }
  return acc;
}

/// V_e(x) = -kappa2 |B(x)|^2, the potential at the aligned rest state.
inline double equilibrium_potential(std::span<const Dipole> dipoles, const Vec3& x, double kappa2) {
  if (!(kappa2 > 0.0)) throw Error(Errc::InvalidParameter, "kappa2 must be positive");
  return -kappa2 * assembly_field(dipoles, x).squaredNorm();
}

/// grad V_e = -2 kappa2 (DB)^T B.
inline Vec3 equilibrium_potential_gradient(std::span<const Dipole> dipoles, const Vec3& x, double kappa2) {
  if (!(kappa2 > 0.0)) throw Error(Errc::InvalidParameter, "kappa2 must be positive");
  const auto fj = assembly_field_and_jacobian(dipoles, x);
  return -2.0 * kappa2 * (fj.jacobian.transpose() * fj.field);
}

enum class CriticalType { Minimum, Maximum, Saddle, Degenerate };

inline const char* to_string(CriticalType t) {
  switch (t) {
    case CriticalType::Minimum: return "min";
    case CriticalType::Maximum: return "max";
    case CriticalType::Saddle: return "saddle";
    case CriticalType::Degenerate: return "degenerate";
  }
  return "degenerate";
}

struct CriticalPoint {
  Vec3 location = Vec3::Zero();
  CriticalType type = CriticalType::Degenerate;
  double value = 0.0;
  double gradient_norm = 0.0;
  Eigen::Vector2d hessian_eigenvalues = Eigen::Vector2d::Zero();
};

struct GridSpec {
  double x_min = -1.0, x_max = 1.0;
  double y_min = -1.0, y_max = 1.0;
  int nx = 101, ny = 101;

  double x_at(int i) const { return x_min + (x_max - x_min) * i / (nx - 1); }
  double y_at(int j) const { return y_min + (y_max - y_min) * j / (ny - 1); }
};

struct LandscapeSample {
  double x = 0.0, y = 0.0, value = 0.0;
};

/// V_e sampled on the plane z = plane_height.
inline std::vector<LandscapeSample> sample_landscape(std::span<const Dipole> dipoles, double plane_height,
                                                     const GridSpec& grid, double kappa2) {
  std::vector<LandscapeSample> out;
  out.reserve(static_cast<std::size_t>(grid.nx) * grid.ny);
  for (int j = 0; j < grid.ny; ++j) {
    for (int i = 0; i < grid.nx; ++i) {
      const Vec3 p(grid.x_at(i), grid.y_at(j), plane_height);
      out.push_back({p.x(), p.y(), equilibrium_potential(dipoles, p, kappa2)});
    }
  }
  return out;
}

namespace detail {

/// In-plane gradient and central-difference Hessian of V_e.
inline Eigen::Vector2d plane_gradient(std::span<const Dipole> d, const Vec3& p, double k2) {
  const Vec3 g = equilibrium_potential_gradient(d, p, k2);
  return {g.x(), g.y()};
}

inline Eigen::Matrix2d plane_hessian(std::span<const Dipole> d, const Vec3& p, double k2, double step) {
  Eigen::Matrix2d hs;
  for (int a = 0; a < 2; ++a) {
    Vec3 dp = Vec3::Zero();
    dp(a) = step;
    hs.col(a) = (plane_gradient(d, p + dp, k2) - plane_gradient(d, p - dp, k2)) / (2.0 * step);
  }
  return 0.5 * (hs + hs.transpose());
}

}  // namespace detail

/// Critical points of V_e on the plane z = plane_height: grid candidates where
/// |grad V_e| is a discrete local minimum, refined by damped Newton steps on
/// the gradient, de-duplicated, then classified by Hessian eigenvalue signs
/// (eigenvalues within 1e-10 of the largest magnitude count as zero).
inline std::vector<CriticalPoint> scan_critical_points(std::span<const Dipole> dipoles, double plane_height,
                                                       const GridSpec& grid, double kappa2) {
  const int nx = grid.nx, ny = grid.ny;
  const double spacing = std::min((grid.x_max - grid.x_min) / (nx - 1), (grid.y_max - grid.y_min) / (ny - 1));
  std::vector<double> gnorm(static_cast<std::size_t>(nx) * ny);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const Vec3 p(grid.x_at(i), grid.y_at(j), plane_height);
      gnorm[static_cast<std::size_t>(j) * nx + i] = detail::plane_gradient(dipoles, p, kappa2).norm();
    }
  }
  auto at = [&](int i, int j) { return gnorm[static_cast<std::size_t>(j) * nx + i]; };

  std::vector<CriticalPoint> found;
  const double hess_step = 1e-4 * spacing;
  for (int j = 1; j < ny - 1; ++j) {
    for (int i = 1; i < nx - 1; ++i) {
      bool is_local_min = true;
      for (int dj = -1; dj <= 1 && is_local_min; ++dj) {
        for (int di = -1; di <= 1; ++di) {
          if ((di != 0 || dj != 0) && at(i + di, j + dj) < at(i, j)) {
            is_local_min = false;
            break;
          }
        }
      }
      if (!is_local_min) continue;

      Vec3 p(grid.x_at(i), grid.y_at(j), plane_height);
      for (int it = 0; it < 60; ++it) {
        const Eigen::Vector2d g = detail::plane_gradient(dipoles, p, kappa2);
        const Eigen::Matrix2d hs = detail::plane_hessian(dipoles, p, kappa2, hess_step);
        Eigen::Vector2d step = -hs.colPivHouseholderQr().solve(g);
        if (!step.allFinite()) break;
        const double max_step = 0.5 * spacing;
        if (step.norm() > max_step) step *= max_step / step.norm();
        p.x() += step.x();
        p.y() += step.y();
        if (step.norm() < 1e-14 * std::max(1.0, p.norm())) break;
      }
      // Reject candidates that wandered off the grid or did not converge.
      if (p.x() < grid.x_min || p.x() > grid.x_max || p.y() < grid.y_min || p.y() > grid.y_max) continue;
      const Eigen::Matrix2d hs = detail::plane_hessian(dipoles, p, kappa2, hess_step);
      const double hess_scale = hs.cwiseAbs().maxCoeff();
      const double gn = detail::plane_gradient(dipoles, p, kappa2).norm();
      if (gn > 1e-6 * hess_scale * spacing) continue;

      bool duplicate = false;
      for (const auto& c : found) {
        if ((c.location - p).norm() < 1e-3 * spacing) {
          duplicate = true;
          break;
        }
      }
      if (duplicate) continue;

      Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(hs);
      const Eigen::Vector2d ev = es.eigenvalues();
      const double zero = 1e-10 * ev.cwiseAbs().maxCoeff();
      CriticalPoint cp;
      cp.location = p;
      cp.value = equilibrium_potential(dipoles, p, kappa2);
      cp.gradient_norm = gn;
      cp.hessian_eigenvalues = ev;
      if (std::abs(ev(0)) <= zero || std::abs(ev(1)) <= zero) {
        cp.type = CriticalType::Degenerate;
      } else if (ev(0) > 0 && ev(1) > 0) {
        cp.type = CriticalType::Minimum;
      } else if (ev(0) < 0 && ev(1) < 0) {
        cp.type = CriticalType::Maximum;
      } else {
        cp.type = CriticalType::Saddle;
      }
      found.push_back(cp);
    }
  }
  std::sort(found.begin(), found.end(), [](const auto& a, const auto& b) { return a.value < b.value; });
  return found;
}

}  // namespace ballistic
