#pragma once

// Ball on a plane under a dynamic inner ring and a fixed outer ring.
//
// Source dipoles produce fields from their folded moments; a receiving dipole
// enters the coupling energy through its unit orientation times a weight
// (ball_weight for the ball, receiver_weight for inner-ring dipoles facing
// the outer ring). The potential is
//   U = -[ 2 sum_i b.B_i(x - p_i) + sum_j b.B_j(x - q_j)
//          + w sum_ij mhat_i.B_j(p_i - q_j) ],   b = ball_weight * xi3.

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "ballistic/error.hpp"
#include "ballistic/hamel_top.hpp"
#include "ballistic/magnetostatics.hpp"
#include "ballistic/rng.hpp"
#include "ballistic/so3.hpp"
#include "ballistic/statistics.hpp"

namespace ballistic {

enum class MotorMode { NonUniform, Isothermal };

inline std::string_view to_string(MotorMode m) { return m == MotorMode::NonUniform ? "nonuniform" : "isothermal"; }

struct MotorBall {
  double mass = 0.5;
  double radius = 0.04;
  double inertia = 0.4 * 0.5 * 0.04 * 0.04;
  double friction = 0.15;
  double alpha = 0.0;
  double weight = 1.0;
};

struct MotorRing {
  RingSpec spec{0.75, 0.48, 20, 0.0, 0.0, 2e-6};
  double mass = 6.0;
  double J3 = 6.0 * 0.75 * 0.75;
  double J = 0.5 * 6.0 * 0.75 * 0.75;
  double friction = 0.0;
  double alpha = 2e-4;
  double receiver_weight = 1.0;
};

struct MotorParams {
  MotorBall ball{};
  MotorRing inner{};
  RingSpec outer{0.98, 0.48, 5, 0.0, 0.0, 2e-6};
  double gravity = 9.81;

  void validate() const {
    if (!(ball.mass > 0.0) || !(ball.radius > 0.0) || !(ball.inertia > 0.0)) {
      throw Error(Errc::ValidationError, "ball mass, radius and inertia must be positive");
    }
    if (!(inner.mass > 0.0) || !(inner.J > 0.0) || !(inner.J3 > 0.0)) {
      throw Error(Errc::ValidationError, "ring mass and inertias must be positive");
    }
    if (!(ball.friction >= 0.0) || !(inner.friction >= 0.0)) {
      throw Error(Errc::ValidationError, "friction must be non-negative");
    }
    if (!(ball.alpha >= 0.0) || !(inner.alpha >= 0.0)) {
      throw Error(Errc::ValidationError, "noise amplitudes must be non-negative");
    }
    inner.spec.validate();
    outer.validate();
  }

  /// Equal temperatures on ball and ring: c_R / alpha_R^2 = c_B / alpha_B^2.
  void validate_isothermal() const {
    validate();
    if (!(ball.alpha > 0.0) || !(inner.alpha > 0.0)) {
      throw Error(Errc::ValidationError, "isothermal mode needs positive ball and ring noise");
    }
    const double tb = ball.friction / (ball.alpha * ball.alpha);
    const double tr = inner.friction / (inner.alpha * inner.alpha);
    if (!(std::abs(tb - tr) <= 1e-12 * std::max(std::abs(tb), std::abs(tr)))) {
      throw Error(Errc::ValidationError, "isothermal mode requires c_R/alpha_R^2 = c_B/alpha_B^2");
    }
  }

  /// trace of the spatial inverse ring inertia, 2/J + 1/J3.
  double ring_inverse_inertia_trace() const { return 2.0 / inner.J + 1.0 / inner.J3; }
};

struct MotorState {
  Vec3 x = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Vec3 xi3 = Vec3::UnitZ();
  Vec3 pi_B = Vec3::Zero();
  Mat3 R_R = Mat3::Identity();
  Vec3 pi_R = Vec3::Zero();
};

/// Standard normals for one step: ball[0..3] drive (v1, v2, omega1, omega2)
/// in isothermal mode, ring[0..2] drive the ring torque.
struct MotorNoise {
  Eigen::Vector4d ball = Eigen::Vector4d::Zero();
  Vec3 ring = Vec3::Zero();

  static MotorNoise draw(NormalStream& rng) {
    MotorNoise z;
    for (int i = 0; i < 4; ++i) z.ball(i) = rng();
    for (int i = 0; i < 3; ++i) z.ring(i) = rng();
    return z;
  }
};

/// Reference placement of the inner ring (before R_R) and the fixed outer ring.
class MotorGeometry {
 public:
  explicit MotorGeometry(const MotorParams& p) : outer_(build_ring(p.outer)) {
    const RingSpec& s = p.inner.spec;
    s.validate();
    center_ = s.center();
    const Mat3 att = s.attitude();
    for (const Vec3& u : ring_reference_directions(s.count)) {
      const Vec3 dir = att * u;
      offsets_.push_back(s.radius * dir);
      moments_.push_back(s.moment * dir);
    }
  }

  /// Inner dipoles in the world frame for ring attitude R.
  std::vector<Dipole> inner(const Mat3& R) const {
    std::vector<Dipole> out;
    out.reserve(offsets_.size());
    for (std::size_t i = 0; i < offsets_.size(); ++i) {
      out.push_back({center_ + R * offsets_[i], R * moments_[i]});
    }
    return out;
  }

  const std::vector<Dipole>& outer() const { return outer_; }
  const Vec3& inner_center() const { return center_; }

 private:
  Vec3 center_ = Vec3::Zero();
  std::vector<Vec3> offsets_;
  std::vector<Vec3> moments_;
  std::vector<Dipole> outer_;
};

struct MotorForces {
  double potential = 0.0;
  Vec3 ball_force = Vec3::Zero();   // planar
  Vec3 ball_torque = Vec3::Zero();  // spatial
  Vec3 ring_torque = Vec3::Zero();  // spatial, about the inner ring center
};

inline Vec3 ball_omega(const MotorState& s, const MotorParams& p) { return s.pi_B / p.ball.inertia; }

inline Vec3 ring_omega(const MotorState& s, const MotorParams& p) {
  return legendre_inverse(s.pi_R, s.R_R.col(2), p.inner.J, p.inner.J3);
}

inline Vec3 motor_slip_velocity(const MotorState& s, const MotorParams& p) {
  return slip_velocity(s.v, ball_omega(s, p), p.ball.radius);
}

/// Potential and its analytic generalized forces (-dU) at the given state.
inline MotorForces motor_forces(const MotorState& s, const MotorParams& p, const MotorGeometry& g) {
  MotorForces f;
  const Vec3 b = p.ball.weight * s.xi3;
  const auto inner = g.inner(s.R_R);
  const Vec3 c = g.inner_center();

  Vec3 field = Vec3::Zero();
  Mat3 jac = Mat3::Zero();
  for (const auto& d : inner) {
    const Vec3 r = s.x - d.position;
    const auto fj = dipole_field_and_jacobian(r, d.moment);
    field += 2.0 * fj.field;
    jac += 2.0 * fj.jacobian;
    const Vec3 arm = d.position - c;
    // B(r, b) is even in r, so this is the ball's field at the ring dipole.
    f.ring_torque += 2.0 * (d.moment.cross(dipole_field(r, b)) - arm.cross(fj.jacobian.transpose() * b));
  }
  for (const auto& d : g.outer()) {
    const auto fj = dipole_field_and_jacobian(s.x - d.position, d.moment);
    field += fj.field;
    jac += fj.jacobian;
  }
  f.potential = -b.dot(field);
  f.ball_force = jac.transpose() * b;
  f.ball_force.z() = 0.0;
  f.ball_torque = b.cross(field);

  const double w = p.inner.receiver_weight;
  for (const auto& di : inner) {
    const double norm = di.moment.norm();
    if (norm == 0.0) continue;
    const Vec3 mhat = (w / norm) * di.moment;
    const Vec3 arm = di.position - c;
    for (const auto& dj : g.outer()) {
      const auto fj = dipole_field_and_jacobian(di.position - dj.position, dj.moment);
      f.potential -= mhat.dot(fj.field);
      f.ring_torque += mhat.cross(fj.field) + arm.cross(fj.jacobian.transpose() * mhat);
    }
  }
  return f;
}

inline double total_potential(const MotorState& s, const MotorParams& p, const MotorGeometry& g) {
  return motor_forces(s, p, g).potential;
}

inline double total_potential(const MotorState& s, const MotorParams& p) {
  return total_potential(s, p, MotorGeometry(p));
}

/// Central-difference forces for cross-checking motor_forces.
inline MotorForces motor_forces_fd(const MotorState& s, const MotorParams& p, const MotorGeometry& g,
                                   double dx = 1e-6, double dangle = 1e-6) {
  MotorForces f;
  f.potential = total_potential(s, p, g);
  for (int a = 0; a < 2; ++a) {
    MotorState up = s, dn = s;
    up.x(a) += dx;
    dn.x(a) -= dx;
    f.ball_force(a) = -(total_potential(up, p, g) - total_potential(dn, p, g)) / (2.0 * dx);
  }
  for (int a = 0; a < 3; ++a) {
    const Mat3 rp = Eigen::AngleAxisd(dangle, Vec3::Unit(a)).toRotationMatrix();
    const Mat3 rm = rp.transpose();
    MotorState up = s, dn = s;
    up.xi3 = rp * s.xi3;
    dn.xi3 = rm * s.xi3;
    f.ball_torque(a) = -(total_potential(up, p, g) - total_potential(dn, p, g)) / (2.0 * dangle);
    up = s;
    dn = s;
    up.R_R = rp * s.R_R;
    dn.R_R = rm * s.R_R;
    f.ring_torque(a) = -(total_potential(up, p, g) - total_potential(dn, p, g)) / (2.0 * dangle);
  }
  return f;
}

inline double ring_energy(const MotorState& s, const MotorParams& p) { return 0.5 * s.pi_R.dot(ring_omega(s, p)); }

inline double motor_kinetic_energy(const MotorState& s, const MotorParams& p) {
  return 0.5 * p.ball.mass * s.v.squaredNorm() + 0.5 * s.pi_B.squaredNorm() / p.ball.inertia + ring_energy(s, p);
}

inline double energy(const MotorState& s, const MotorParams& p, const MotorGeometry& g) {
  return motor_kinetic_energy(s, p) + p.ball.mass * p.gravity * s.x.z() + total_potential(s, p, g);
}

/// Ball dissipation matrix over (v1, v2, omega1, omega2): C4 = a a^T + b b^T.
inline Eigen::Matrix4d ball_dissipation_matrix(double mass, double radius, double inertia) {
  const Eigen::Vector4d a(1.0 / mass, 0.0, 0.0, -radius / inertia);
  const Eigen::Vector4d b(0.0, 1.0 / mass, radius / inertia, 0.0);
  return a * a.transpose() + b * b.transpose();
}

/// Per-step contributions to the energy ledger.
struct MotorStepWork {
  double injected = 0.0;
  double dissipated = 0.0;
};

/// One explicit step shared by both modes. Ball noise enters only when
/// ball_noise_sqrt is given (isothermal mode).
namespace detail {

inline MotorState motor_step(const MotorState& s, const MotorParams& p, const MotorGeometry& g, double h,
                             const MotorNoise& z, const Eigen::Matrix4d* ball_noise_sqrt, MotorStepWork* work) {
  if (!(h > 0.0)) throw Error(Errc::InvalidParameter, "step size must be positive");
  const MotorForces f = motor_forces(s, p, g);
  const double sh = std::sqrt(h);
  const Vec3 vq = motor_slip_velocity(s, p);
  const Vec3 omega_b = ball_omega(s, p);
  const Vec3 omega_r = ring_omega(s, p);
  const double cb = p.ball.friction;
  const double cr = p.inner.friction;

  MotorState n = s;
  Vec3 fric_force = -cb * vq;
  fric_force.z() = 0.0;
  const Vec3 fric_torque = cb * p.ball.radius * Vec3::UnitZ().cross(vq);
  n.v = s.v + (h / p.ball.mass) * (f.ball_force + fric_force);
  n.v.z() = 0.0;
  n.pi_B = s.pi_B + h * (f.ball_torque + fric_torque);

  const Vec3 dW_ring = sh * z.ring;
  n.pi_R = s.pi_R + h * (f.ring_torque - cr * omega_r) + p.inner.alpha * dW_ring;

  if (work) {
    work->injected += p.inner.alpha * omega_r.dot(dW_ring) +
                      0.5 * p.inner.alpha * p.inner.alpha * p.ring_inverse_inertia_trace() * h;
    work->dissipated += cb * h * vq.squaredNorm() + cr * h * omega_r.squaredNorm();
  }

  if (ball_noise_sqrt) {
    const double ab = p.ball.alpha;
    const Eigen::Vector4d kick = ab * sh * (*ball_noise_sqrt) * z.ball;
    n.v.x() += kick(0);
    n.v.y() += kick(1);
    n.pi_B.x() += p.ball.inertia * kick(2);
    n.pi_B.y() += p.ball.inertia * kick(3);
    if (work) {
      const Eigen::Vector4d u(s.v.x(), s.v.y(), omega_b.x(), omega_b.y());
      const Eigen::Vector4d mu(p.ball.mass * u(0), p.ball.mass * u(1), p.ball.inertia * u(2), p.ball.inertia * u(3));
      work->injected += mu.dot(kick) + ab * ab * (1.0 / p.ball.mass +
                                                  p.ball.radius * p.ball.radius / p.ball.inertia) * h;
    }
  }

  n.x = s.x + h * n.v;
  n.x.z() = p.ball.radius;
  n.xi3 = rotate_vector_step(s.xi3, n.pi_B / p.ball.inertia, h);
  n.R_R = rotate_step(s.R_R, legendre_inverse(n.pi_R, s.R_R.col(2), p.inner.J, p.inner.J3), h);
  return n;
}

}  // namespace detail

/// Ball with sliding friction and no noise; ring driven by alpha_R dW (and
/// damped by c_R if nonzero).
inline MotorState nonuniform_step(const MotorState& s, const MotorParams& p, const MotorGeometry& g, double h,
                                  const Vec3& ring_noise, MotorStepWork* work = nullptr) {
  MotorNoise z;
  z.ring = ring_noise;
  return detail::motor_step(s, p, g, h, z, nullptr, work);
}

/// Square root of the ball dissipation matrix, precomputed once per run.
inline Eigen::Matrix4d ball_noise_sqrt(const MotorParams& p) {
  const Eigen::Matrix4d c4 = ball_dissipation_matrix(p.ball.mass, p.ball.radius, p.ball.inertia);
  return psd_sqrt(SymPSD4(c4)).matrix();
}

/// Equal-temperature stepper: the ball's (v1, v2, omega1, omega2) receive
/// alpha_B C4^{1/2} sqrt(h) z; omega3 receives no noise.
inline MotorState isothermal_step(const MotorState& s, const MotorParams& p, const MotorGeometry& g, double h,
                                  const MotorNoise& z, const Eigen::Matrix4d& noise_sqrt,
                                  MotorStepWork* work = nullptr) {
  return detail::motor_step(s, p, g, h, z, &noise_sqrt, work);
}

inline MotorState isothermal_step(const MotorState& s, const MotorParams& p, const MotorGeometry& g, double h,
                                  const MotorNoise& z, MotorStepWork* work = nullptr) {
  const Eigen::Matrix4d sq = ball_noise_sqrt(p);
  return detail::motor_step(s, p, g, h, z, &sq, work);
}

/// Relaxes the ball with friction while the rings are held fixed; used to put
/// the ball at rest in a potential well before noise is switched on.
inline MotorState settle_ball(MotorState s, const MotorParams& p, const MotorGeometry& g, double h, long steps) {
  MotorParams frozen = p;
  frozen.inner.alpha = 0.0;
  for (long k = 0; k < steps; ++k) {
    const Mat3 R = s.R_R;
    s.pi_R.setZero();
    s = nonuniform_step(s, frozen, g, h, Vec3::Zero());
    s.R_R = R;
  }
  s.pi_R.setZero();
  s.v.setZero();
  s.pi_B.setZero();
  return s;
}

struct MotorRecord {
  double t = 0.0;
  Vec3 x = Vec3::Zero();
  double angle = 0.0;  // unwrapped polar angle of the ball
  double ring_angle = 0.0;
  double E_total = 0.0;
  double E_ring = 0.0;
  double W_injected = 0.0;
  double W_dissipated = 0.0;
};

struct EnergyLedger {
  std::vector<double> times;
  std::vector<double> total_energy;
  std::vector<double> ring_energy;
  std::vector<double> injected;
  std::vector<double> dissipated;
  std::vector<double> residual;  // E - E0 + dissipated - injected
  std::optional<double> efficiency;
};

struct MotorRunSpec {
  MotorMode mode = MotorMode::NonUniform;
  double h = 0.01;
  long n_steps = 1000000;
  long record_stride = 100;
  long settle_steps = 20000;
  Vec3 start = Vec3(0.55, 0.0, 0.0);  // planar start before settling
  std::uint64_t seed = 1;
};

struct MotorRun {
  MotorRunSpec spec;
  std::vector<MotorRecord> records;
  MotorState final_state;
};

namespace detail {

inline double unwrap(double previous, double raw) {
  const double two_pi = 2.0 * std::numbers::pi;
  return previous + std::remainder(raw - previous, two_pi);
}

}  // namespace detail

/// One realization: settle, then integrate with noise, recording the unwrapped
/// ball angle, energies and the cumulative work terms.
inline MotorRun run_motor_experiment(const MotorParams& p, const MotorRunSpec& spec) {
  if (spec.mode == MotorMode::Isothermal) {
    p.validate_isothermal();
  } else {
    p.validate();
  }
  if (!(spec.h > 0.0) || spec.n_steps < 0 || spec.record_stride < 1 || spec.settle_steps < 0) {
    throw Error(Errc::InvalidParameter, "invalid motor run spec");
  }
  const MotorGeometry g(p);
  MotorState s;
  s.x = Vec3(spec.start.x(), spec.start.y(), p.ball.radius);
  s = settle_ball(s, p, g, spec.h, spec.settle_steps);

  NormalStream rng(spec.seed);
  const Eigen::Matrix4d sq = ball_noise_sqrt(p);
  MotorStepWork work;
  MotorRun run;
  run.spec = spec;
  double angle = std::atan2(s.x.y(), s.x.x());
  double ring_angle = 0.0;
  auto record = [&](long n) {
    run.records.push_back({n * spec.h, s.x, angle, ring_angle, energy(s, p, g), ring_energy(s, p), work.injected,
                           work.dissipated});
  };
  record(0);
  for (long n = 1; n <= spec.n_steps; ++n) {
    const MotorNoise z = MotorNoise::draw(rng);
    if (spec.mode == MotorMode::Isothermal) {
      s = isothermal_step(s, p, g, spec.h, z, sq, &work);
    } else {
      s = nonuniform_step(s, p, g, spec.h, z.ring, &work);
    }
    angle = detail::unwrap(angle, std::atan2(s.x.y(), s.x.x()));
    ring_angle = detail::unwrap(ring_angle, std::atan2(s.R_R(1, 0), s.R_R(0, 0)));
    if (n % spec.record_stride == 0 || n == spec.n_steps) record(n);
  }
  run.final_state = s;
  return run;
}

inline EnergyLedger energy_ledger(std::span<const MotorRecord> records) {
  if (records.empty()) throw Error(Errc::MissingNoiseRecord, "no motor records");
  EnergyLedger l;
  const double e0 = records.front().E_total;
  for (const auto& r : records) {
    l.times.push_back(r.t);
    l.total_energy.push_back(r.E_total);
    l.ring_energy.push_back(r.E_ring);
    l.injected.push_back(r.W_injected);
    l.dissipated.push_back(r.W_dissipated);
    l.residual.push_back(r.E_total - e0 + r.W_dissipated - r.W_injected);
  }
  const auto& first = records.front();
  const auto& last = records.back();
  if (last.W_injected != 0.0) {
    const double transferred = (last.E_total - first.E_total) - (last.E_ring - first.E_ring);
    l.efficiency = transferred / last.W_injected;
  }
  return l;
}

struct AngularFlightCriteria {
  double window = 500.0;        // seconds of moving-average window
  double speed = 0.003;         // rad/s
  double min_angle = 2.0 * std::numbers::pi;
};

/// Sustained one-signed angular drifts of the ball spanning at least
/// min_angle radians.
inline std::vector<Flight> angular_flights(std::span<const MotorRecord> records, const AngularFlightCriteria& c) {
  if (records.size() < 2) return {};
  std::vector<double> t, a;
  for (const auto& r : records) {
    t.push_back(r.t);
    a.push_back(r.angle);
  }
  const double dt = t[1] - t[0];
  const auto window = std::max<std::size_t>(2, static_cast<std::size_t>(std::llround(c.window / dt)));
  std::vector<Flight> out;
  for (const auto& f : detect_flights(t, a, window, c.speed)) {
    if (std::abs(f.mean_velocity * f.duration) >= c.min_angle) out.push_back(f);
  }
  return out;
}

}  // namespace ballistic
