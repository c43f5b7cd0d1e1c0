#pragma once

// A magnetized ball sliding on the plane z = r above a ring of dipoles.
//
// The ring uses folded moments (T*m^3) so B(x) is in tesla. The ball's dipole
// is ball_moment * xi3 in A*m^2; the coupling energy is -ball_moment xi3 . B(x).

#include <cmath>
#include <numbers>
#include <optional>
#include <string_view>
#include <vector>

#include "ballistic/error.hpp"
#include "ballistic/magnetostatics.hpp"
#include "ballistic/so3.hpp"

namespace ballistic {

struct TopParams {
  double mass = 0.2;
  double radius = 0.018;
  double inertia = 0.4 * 0.2 * 0.018 * 0.018;   // I = I1 = I2
  double inertia3 = 0.4 * 0.2 * 0.018 * 0.018;  // I3
  double friction = 0.1;
  double ball_moment = 1.0;
  double gravity = 9.81;
  RingSpec ring{};

  void validate() const {
    if (!(mass > 0.0) || !(radius > 0.0) || !(inertia > 0.0) || !(inertia3 > 0.0)) {
      throw Error(Errc::ValidationError, "mass, radius and inertias must be positive");
    }
    if (!(friction >= 0.0)) throw Error(Errc::ValidationError, "friction must be non-negative");
    if (!std::isfinite(ball_moment) || !std::isfinite(gravity)) {
      throw Error(Errc::ValidationError, "moment and gravity must be finite");
    }
    ring.validate();
  }

  double coupling() const { return ball_moment; }
};

struct TopState {
  Vec3 x = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Vec3 xi3 = Vec3::UnitZ();
  Vec3 pi = Vec3::Zero();
  std::optional<Mat3> attitude;  // full rotation, tracked only in cross-validation mode

  static TopState at_rest(double x1, double x2, double radius, bool full_attitude = false) {
    TopState s;
    s.x = Vec3(x1, x2, radius);
    if (full_attitude) s.attitude = Mat3::Identity();
    return s;
  }
};

struct TopDerivative {
  Vec3 x_dot = Vec3::Zero();
  Vec3 v_dot = Vec3::Zero();
  Vec3 xi3_dot = Vec3::Zero();
  Vec3 pi_dot = Vec3::Zero();
};

/// Angular velocity of an axisymmetric body from its spatial angular momentum.
inline Vec3 legendre_inverse(const Vec3& pi, const Vec3& xi3, double inertia, double inertia3) {
  return (pi + ((inertia - inertia3) / inertia3) * pi.dot(xi3) * xi3) / inertia;
}

/// pi = I omega + (I3 - I)(omega . xi3) xi3.
inline Vec3 legendre_forward(const Vec3& omega, const Vec3& xi3, double inertia, double inertia3) {
  return inertia * omega + (inertia3 - inertia) * omega.dot(xi3) * xi3;
}

/// Velocity of the contact point q = -r e3 relative to the plane.
inline Vec3 slip_velocity(const Vec3& v, const Vec3& omega, double radius) {
  return v + omega.cross(Vec3(0.0, 0.0, -radius));
}

inline Vec3 slip_velocity(const TopState& s, const TopParams& p) {
  return slip_velocity(s.v, legendre_inverse(s.pi, s.xi3, p.inertia, p.inertia3), p.radius);
}

inline double momentum_map(const TopState& s) { return s.pi.dot(s.xi3); }

namespace detail {

inline Vec3 planar(Vec3 a) {
  a.z() = 0.0;
  return a;
}

struct TopForces {
  Vec3 force = Vec3::Zero();
  Vec3 torque = Vec3::Zero();
};

inline TopForces magnetic_forces(const TopState& s, const TopParams& p, std::span<const Dipole> ring) {
  const auto fj = assembly_field_and_jacobian(ring, s.x);
  const double k = p.coupling();
  return {planar(k * (fj.jacobian.transpose() * s.xi3)), k * s.xi3.cross(fj.field)};
}

inline TopForces friction_forces(const TopState& s, const TopParams& p) {
  if (p.friction == 0.0) return {};
  const Vec3 vq = slip_velocity(s, p);
  return {planar(-p.friction * vq), p.friction * p.radius * Vec3::UnitZ().cross(vq)};
}

inline TopDerivative assemble(const TopState& s, const TopParams& p, const TopForces& f) {
  TopDerivative d;
  const Vec3 omega = legendre_inverse(s.pi, s.xi3, p.inertia, p.inertia3);
  d.x_dot = planar(s.v);
  d.v_dot = f.force / p.mass;
  d.xi3_dot = omega.cross(s.xi3);
  d.pi_dot = f.torque;
  return d;
}

}  // namespace detail

/// Frictionless equations of motion with the constraint force eliminated.
inline TopDerivative conservative_rhs(const TopState& s, const TopParams& p, std::span<const Dipole> ring) {
  return detail::assemble(s, p, detail::magnetic_forces(s, p, ring));
}

inline TopDerivative conservative_rhs(const TopState& s, const TopParams& p) {
  const auto ring = build_ring(p.ring);
  return conservative_rhs(s, p, ring);
}

inline TopDerivative nonconservative_rhs(const TopState& s, const TopParams& p, std::span<const Dipole> ring) {
  auto f = detail::magnetic_forces(s, p, ring);
  const auto fr = detail::friction_forces(s, p);
  f.force += fr.force;
  f.torque += fr.torque;
  return detail::assemble(s, p, f);
}

inline TopDerivative nonconservative_rhs(const TopState& s, const TopParams& p) {
  const auto ring = build_ring(p.ring);
  return nonconservative_rhs(s, p, ring);
}

/// Magnetic coupling energy plus gravity at the constrained height.
inline double top_potential(const TopState& s, const TopParams& p, std::span<const Dipole> ring) {
  return p.mass * p.gravity * s.x.z() - p.coupling() * s.xi3.dot(assembly_field(ring, s.x));
}

inline double kinetic_energy(const TopState& s, const TopParams& p) {
  const Vec3 omega = legendre_inverse(s.pi, s.xi3, p.inertia, p.inertia3);
  return 0.5 * p.mass * s.v.squaredNorm() + 0.5 * s.pi.dot(omega);
}

inline double energy(const TopState& s, const TopParams& p, std::span<const Dipole> ring) {
  return kinetic_energy(s, p) + top_potential(s, p, ring);
}

/// One explicit step: momenta from current forces, then position and attitude
/// from the updated momenta.
inline TopState hp_step(const TopState& s, const TopParams& p, std::span<const Dipole> ring, double h) {
  if (!(h > 0.0)) throw Error(Errc::InvalidParameter, "step size must be positive");
  const TopDerivative d = nonconservative_rhs(s, p, ring);
  TopState n = s;
  n.pi = s.pi + h * d.pi_dot;
  n.v = detail::planar(s.v + h * d.v_dot);
  n.x = s.x + h * n.v;
  n.x.z() = p.radius;
  const Vec3 omega = legendre_inverse(n.pi, s.xi3, p.inertia, p.inertia3);
  if (s.attitude) {
    n.attitude = rotate_step(*s.attitude, omega, h);
    n.xi3 = n.attitude->col(2);
  } else {
    n.xi3 = rotate_vector_step(s.xi3, omega, h);
  }
  return n;
}

enum class TopCase { ConservativeAxisymmetric, ConservativeTilted, FrictionAxisymmetric, FrictionTilted };

inline constexpr TopCase kAllTopCases[] = {TopCase::ConservativeAxisymmetric, TopCase::ConservativeTilted,
                                           TopCase::FrictionAxisymmetric, TopCase::FrictionTilted};

inline std::string_view to_string(TopCase c) {
  switch (c) {
    case TopCase::ConservativeAxisymmetric: return "conaxi";
    case TopCase::ConservativeTilted: return "contilt";
    case TopCase::FrictionAxisymmetric: return "axi";
    case TopCase::FrictionTilted: return "tilt";
  }
  return "conaxi";
}

inline bool is_tilted(TopCase c) { return c == TopCase::ConservativeTilted || c == TopCase::FrictionTilted; }
inline bool has_friction(TopCase c) { return c == TopCase::FrictionAxisymmetric || c == TopCase::FrictionTilted; }

struct TopExperiment {
  TopParams params{};
  double h = 0.025;
  long n_steps = 20000;
  long record_stride = 1;
  double friction = 0.3;              // used by the friction cases
  double tilt = std::numbers::pi / 64;  // ring tilt in the tilted cases
  double tilt_azimuth = 0.0;
  Vec3 start = Vec3(0.0, 0.05, 0.0);  // planar start (x1, x2); the ball starts at rest with xi3 = e3
  bool full_attitude = false;

  /// Parameters of the given case: friction and ring attitude overridden.
  TopParams case_params(TopCase c) const {
    TopParams p = params;
    p.friction = has_friction(c) ? friction : 0.0;
    p.ring.tilt = is_tilted(c) ? tilt : 0.0;
    p.ring.azimuth = is_tilted(c) ? tilt_azimuth : 0.0;
    return p;
  }
};

struct TopRecord {
  double t = 0.0;
  TopState state;
  double J = 0.0;
  double E = 0.0;
};

struct TopRun {
  TopCase which = TopCase::ConservativeAxisymmetric;
  TopParams params;
  double h = 0.0;
  std::vector<TopRecord> records;
  double max_abs_J = 0.0;        // over every step, not only recorded ones
  double max_J_deviation = 0.0;  // max |J(t) - J(0)| over every step
  double max_abs_pi = 0.0;
  double terminal_J = 0.0;
};

inline TopRun run_experiment(TopCase which, const TopExperiment& ex) {
  if (!(ex.h > 0.0)) throw Error(Errc::InvalidParameter, "step size must be positive");
  if (ex.n_steps < 0 || ex.record_stride < 1) throw Error(Errc::InvalidParameter, "invalid step counts");
  TopRun run;
  run.which = which;
  run.params = ex.case_params(which);
  run.params.validate();
  run.h = ex.h;
  const auto ring = build_ring(run.params.ring);
  TopState s = TopState::at_rest(ex.start.x(), ex.start.y(), run.params.radius, ex.full_attitude);
  const double j0 = momentum_map(s);
  auto record = [&](long n) {
    run.records.push_back({n * ex.h, s, momentum_map(s), energy(s, run.params, ring)});
  };
  record(0);
  for (long n = 1; n <= ex.n_steps; ++n) {
    s = hp_step(s, run.params, ring, ex.h);
    const double j = momentum_map(s);
    run.max_abs_J = std::max(run.max_abs_J, std::abs(j));
    run.max_J_deviation = std::max(run.max_J_deviation, std::abs(j - j0));
    run.max_abs_pi = std::max(run.max_abs_pi, s.pi.norm());
    if (n % ex.record_stride == 0 || n == ex.n_steps) record(n);
  }
  run.terminal_J = momentum_map(s);
  return run;
}

}  // namespace ballistic
