#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "ballistic/magnetic_motor.hpp"

using namespace ballistic;

namespace {

Mat3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  return q.normalized().toRotationMatrix();
}

MotorState random_state(std::mt19937_64& rng, const MotorParams& p) {
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  std::normal_distribution<double> n;
  MotorState s;
  s.x = Vec3(u(rng), u(rng), p.ball.radius);
  s.v = Vec3(n(rng), n(rng), 0.0) * 0.1;
  s.xi3 = Vec3(n(rng), n(rng), n(rng)).normalized();
  s.pi_B = Vec3(n(rng), n(rng), n(rng)) * 1e-4;
  s.R_R = random_rotation(rng);
  s.pi_R = Vec3(n(rng), n(rng), n(rng)) * 0.1;
  return s;
}

MotorParams unmagnetized() {
  MotorParams p;
  p.inner.spec.moment = 0.0;
  p.outer.moment = 0.0;
  return p;
}

}  // namespace

TEST(MotorPotential, VanishesWithoutMoments) {
  std::mt19937_64 rng(1);
  const MotorParams p = unmagnetized();
  const MotorGeometry g(p);
  for (int k = 0; k < 20; ++k) {
    const auto f = motor_forces(random_state(rng, p), p, g);
    EXPECT_EQ(f.potential, 0.0);
    EXPECT_EQ(f.ball_force, Vec3::Zero());
    EXPECT_EQ(f.ball_torque, Vec3::Zero());
    EXPECT_EQ(f.ring_torque, Vec3::Zero());
  }
}

TEST(MotorPotential, BallTermDecaysWithDistance) {
  MotorParams p;
  MotorParams ringless = p;
  ringless.ball.weight = 0.0;
  const MotorGeometry g(p);
  auto ball_part = [&](double d) {
    MotorState s;
    s.x = Vec3(d, 0.0, p.ball.radius);
    return std::abs(total_potential(s, p, g) - total_potential(s, ringless, g));
  };
  const double near = ball_part(10.0), far = ball_part(20.0);
  EXPECT_GT(near, 0.0);
  EXPECT_LT(far, near / 8.0);
}

TEST(MotorPotential, InvariantUnderOuterRingSymmetry) {
  std::mt19937_64 rng(2);
  const MotorParams p;
  const MotorGeometry g(p);
  const Mat3 q = Eigen::AngleAxisd(2.0 * std::numbers::pi / p.outer.count, Vec3::UnitZ()).toRotationMatrix();
  for (int k = 0; k < 20; ++k) {
    const MotorState s = random_state(rng, p);
    MotorState t = s;
    t.x = q * s.x;
    t.xi3 = q * s.xi3;
    t.R_R = q * s.R_R;
    const double a = total_potential(s, p, g), b = total_potential(t, p, g);
    EXPECT_NEAR(a, b, 1e-12 * std::abs(a));
  }
}

TEST(MotorForces, MatchFiniteDifferences) {
  std::mt19937_64 rng(3);
  const MotorParams p;
  const MotorGeometry g(p);
  for (int k = 0; k < 100; ++k) {
    const MotorState s = random_state(rng, p);
    const auto a = motor_forces(s, p, g);
    const auto n = motor_forces_fd(s, p, g);
    EXPECT_NEAR(a.potential, n.potential, 0.0);
    EXPECT_LT((a.ball_force - n.ball_force).norm(), 1e-6 * std::max(a.ball_force.norm(), 1e-12));
    // the potential depends on xi3 only, so only the torque component normal to xi3 is seen
    const Vec3 tb = a.ball_torque - a.ball_torque.dot(s.xi3) * s.xi3;
    EXPECT_LT((tb - n.ball_torque).norm(), 1e-6 * std::max(tb.norm(), 1e-12));
    EXPECT_LT((a.ring_torque - n.ring_torque).norm(), 1e-6 * std::max(a.ring_torque.norm(), 1e-12));
  }
}

TEST(DissipationMatrix, EigenvaluesAndSquareRoot) {
  const double m = 0.5, r = 0.04, J = 3.2e-4;
  const Eigen::Matrix4d c = ball_dissipation_matrix(m, r, J);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(c);
  const double lam = 1.0 / (m * m) + r * r / (J * J);
  const Eigen::Vector4d ev = es.eigenvalues();
  EXPECT_NEAR(ev(0), 0.0, 1e-9 * lam);
  EXPECT_NEAR(ev(1), 0.0, 1e-9 * lam);
  EXPECT_NEAR(ev(2), lam, 1e-12 * lam);
  EXPECT_NEAR(ev(3), lam, 1e-12 * lam);
  MotorParams p;
  p.ball.mass = m;
  p.ball.radius = r;
  p.ball.inertia = J;
  const Eigen::Matrix4d s = ball_noise_sqrt(p);
  EXPECT_LT((s * s - c).norm(), 1e-9 * lam);
}

TEST(MotorStep, FrictionForceAndTorqueAreConsistent) {
  std::mt19937_64 rng(4);
  MotorParams p = unmagnetized();
  p.inner.alpha = 0.0;
  const MotorGeometry g(p);
  const double h = 0.01;
  for (int k = 0; k < 20; ++k) {
    const MotorState s = random_state(rng, p);
    const MotorState n = nonuniform_step(s, p, g, h, Vec3::Zero());
    const Vec3 vq = s.v + p.ball.radius * Vec3::UnitZ().cross(s.pi_B / p.ball.inertia);
    const Vec3 force = p.ball.mass * (n.v - s.v) / h;
    const Vec3 torque = (n.pi_B - s.pi_B) / h;
    EXPECT_LT((force - Vec3(-p.ball.friction * vq.x(), -p.ball.friction * vq.y(), 0.0)).norm(), 1e-12);
    // torque of the contact force applied at -r e3
    EXPECT_LT((torque - Vec3(0, 0, -p.ball.radius).cross(force)).norm(), 1e-12);
    EXPECT_EQ(n.pi_B.z(), s.pi_B.z());
  }
}

TEST(MotorStep, ZeroCouplingWithoutFrictionKeepsMomenta) {
  std::mt19937_64 rng(5);
  MotorParams p = unmagnetized();
  p.ball.friction = 0.0;
  p.inner.alpha = 0.0;
  const MotorGeometry g(p);
  const MotorState s = random_state(rng, p);
  MotorState n = s;
  for (int k = 0; k < 1000; ++k) n = nonuniform_step(n, p, g, 0.01, Vec3::Zero());
  EXPECT_EQ(n.v, s.v);
  EXPECT_EQ(n.pi_B, s.pi_B);
  EXPECT_EQ(n.pi_R, s.pi_R);
  EXPECT_LT((n.x - (s.x + 1000 * 0.01 * s.v)).norm(), 1e-12);
}

TEST(MotorStep, RestWithoutNoiseOrFieldIsStatic) {
  MotorParams p = unmagnetized();
  p.inner.alpha = 0.0;
  const MotorGeometry g(p);
  MotorState s;
  s.x = Vec3(0.3, -0.2, p.ball.radius);
  MotorState n = s;
  for (int k = 0; k < 100; ++k) n = nonuniform_step(n, p, g, 0.01, Vec3::Zero());
  EXPECT_EQ(n.x, s.x);
  EXPECT_EQ(n.v, s.v);
  EXPECT_EQ(n.pi_B, s.pi_B);
  EXPECT_EQ(n.R_R, s.R_R);
  EXPECT_THROW(nonuniform_step(s, p, g, 0.0, Vec3::Zero()), Error);
}

TEST(MotorStep, EnergyNonIncreasingWithoutNoise) {
  MotorParams p;
  p.inner.alpha = 0.0;
  p.inner.friction = 0.05;
  const MotorGeometry g(p);
  auto worst_rise = [&](double h) {
    std::mt19937_64 local(6);
    MotorState s = random_state(local, p);
    double e = energy(s, p, g), rise = 0.0;
    const double e0 = e;
    for (int k = 0; k < static_cast<int>(20.0 / h); ++k) {
      s = nonuniform_step(s, p, g, h, Vec3::Zero());
      const double en = energy(s, p, g);
      rise = std::max(rise, en - e);
      e = en;
    }
    return std::make_pair(rise, e - e0);
  };
  const auto [r1, net1] = worst_rise(0.01);
  const auto [r2, net2] = worst_rise(0.005);
  EXPECT_LT(net1, 0.0);
  EXPECT_LT(net2, 0.0);
  EXPECT_LT(r2, r1 / 3.0 + 1e-15);
}

TEST(MotorStep, SteppersAgreeWithoutBallNoise) {
  std::mt19937_64 rng(7);
  MotorParams p;
  p.ball.alpha = 0.0;
  p.inner.friction = 0.0;
  const MotorGeometry g(p);
  NormalStream noise(11);
  MotorState a = random_state(rng, p), b = a;
  MotorStepWork wa, wb;
  for (int k = 0; k < 500; ++k) {
    const MotorNoise z = MotorNoise::draw(noise);
    a = nonuniform_step(a, p, g, 0.01, z.ring, &wa);
    b = isothermal_step(b, p, g, 0.01, z, &wb);
  }
  EXPECT_EQ(a.x, b.x);
  EXPECT_EQ(a.pi_B, b.pi_B);
  EXPECT_EQ(a.pi_R, b.pi_R);
  EXPECT_EQ(a.R_R, b.R_R);
  EXPECT_EQ(wa.injected, wb.injected);
  EXPECT_EQ(wa.dissipated, wb.dissipated);
}

TEST(MotorStep, IsothermalSlipAndRingReachGibbs) {
  MotorParams p = unmagnetized();
  p.ball.alpha = 0.1;
  p.inner.friction = 1.0;
  p.inner.alpha = std::sqrt(p.inner.friction / p.ball.friction) * p.ball.alpha;
  ASSERT_NO_THROW(p.validate_isothermal());
  const double kT = p.ball.alpha * p.ball.alpha / (2.0 * p.ball.friction);
  const MotorGeometry g(p);
  const Eigen::Matrix4d sq = ball_noise_sqrt(p);
  NormalStream noise(2024);
  MotorState s;
  s.x.z() = p.ball.radius;
  const double h = 0.005;
  const long burn = 20000, n = 2'000'000;
  double slip2 = 0.0, ring_ke = 0.0, contact_l = 0.0;
  for (long k = 0; k < burn + n; ++k) {
    s = isothermal_step(s, p, g, h, MotorNoise::draw(noise), sq);
    if (k < burn) continue;
    const Vec3 vq = motor_slip_velocity(s, p);
    slip2 += 0.5 * (vq.x() * vq.x() + vq.y() * vq.y());
    ring_ke += ring_energy(s, p);
    contact_l = std::max(contact_l, std::abs(p.ball.mass * p.ball.radius * s.v.x() + s.pi_B.y()));
  }
  const double slip_var = kT * (1.0 / p.ball.mass + p.ball.radius * p.ball.radius / p.ball.inertia);
  EXPECT_NEAR(slip2 / n, slip_var, 0.05 * slip_var);
  EXPECT_NEAR(ring_ke / n, 1.5 * kT, 0.05 * 1.5 * kT);
  // angular momentum about the contact point receives no noise and no friction
  EXPECT_LT(contact_l, 1e-12);
}

TEST(MotorRun, Deterministic) {
  MotorParams p;
  MotorRunSpec spec;
  spec.n_steps = 2000;
  spec.settle_steps = 200;
  spec.seed = 42;
  const auto a = run_motor_experiment(p, spec);
  const auto b = run_motor_experiment(p, spec);
  ASSERT_EQ(a.records.size(), b.records.size());
  ASSERT_EQ(a.records.size(), 21u);
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    EXPECT_EQ(a.records[i].x, b.records[i].x);
    EXPECT_EQ(a.records[i].W_injected, b.records[i].W_injected);
  }
  spec.seed = 43;
  const auto c = run_motor_experiment(p, spec);
  EXPECT_NE(a.final_state.pi_R, c.final_state.pi_R);
}

TEST(MotorRun, IsothermalRequiresEqualTemperatures) {
  MotorParams p;
  p.ball.alpha = 0.1;
  p.inner.friction = 0.2;
  MotorRunSpec spec;
  spec.mode = MotorMode::Isothermal;
  spec.n_steps = 10;
  try {
    run_motor_experiment(p, spec);
    FAIL() << "expected ValidationError";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ValidationError);
  }
}

TEST(EnergyLedger, EfficiencyUndefinedWithoutNoise) {
  MotorParams p;
  p.inner.alpha = 0.0;
  MotorRunSpec spec;
  spec.n_steps = 500;
  spec.settle_steps = 100;
  const auto run = run_motor_experiment(p, spec);
  const auto l = energy_ledger(run.records);
  EXPECT_FALSE(l.efficiency.has_value());
  EXPECT_EQ(l.injected.back(), 0.0);
  EXPECT_THROW(energy_ledger(std::span<const MotorRecord>{}), Error);
  try {
    energy_ledger(std::span<const MotorRecord>{});
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::MissingNoiseRecord);
  }
}

TEST(EnergyLedger, ResidualSmallAgainstInjectedWork) {
  MotorParams p;
  MotorRunSpec spec;
  spec.n_steps = 100000;
  spec.settle_steps = 2000;
  spec.record_stride = 1000;
  spec.seed = 9;
  const auto run = run_motor_experiment(p, spec);
  const auto l = energy_ledger(run.records);
  ASSERT_TRUE(l.efficiency.has_value());
  EXPECT_GT(l.injected.back(), 0.0);
  EXPECT_LT(std::abs(l.residual.back()), 0.05 * l.injected.back());
}

TEST(AngularFlights, SyntheticRecords) {
  std::vector<MotorRecord> steady, still;
  for (int k = 0; k <= 3000; ++k) {
    MotorRecord r;
    r.t = k;
    r.angle = k < 500 ? 0.0 : 0.02 * (k - 500);
    steady.push_back(r);
    r.angle = 1e-4 * std::sin(0.1 * k);
    still.push_back(r);
  }
  const auto f = angular_flights(steady, AngularFlightCriteria{});
  ASSERT_EQ(f.size(), 1u);
  EXPECT_NEAR(f[0].mean_velocity, 0.02, 0.005);
  EXPECT_TRUE(angular_flights(still, AngularFlightCriteria{}).empty());
  AngularFlightCriteria strict;
  strict.min_angle = 100.0;
  EXPECT_TRUE(angular_flights(steady, strict).empty());
}
