#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "ballistic/rng.hpp"
#include "ballistic/sliding_disk.hpp"

using namespace ballistic;

namespace {

DiskParams params(double sigma, double c, double alpha, PotentialSpec u) {
  DiskParams p;
  p.sigma = sigma;
  p.c = c;
  p.alpha = alpha;
  p.potential = std::move(u);
  return p;
}

}  // namespace

TEST(FrictionMatrix, UnitSigma) {
  const auto c = friction_matrix(1.0);
  MatN<2> expected;
  expected << 1, 1, 1, 1;
  EXPECT_EQ(c.matrix(), expected);
  const auto ev = c.eigenvalues();
  EXPECT_NEAR(ev(0), 0.0, 1e-15);
  EXPECT_NEAR(ev(1), 2.0, 1e-15);
}

TEST(FrictionMatrix, SigmaTwoIsSingular) {
  const auto c = friction_matrix(2.0);
  MatN<2> expected;
  expected << 1, 0.5, 0.5, 0.25;
  EXPECT_EQ(c.matrix(), expected);
  EXPECT_DOUBLE_EQ(c.matrix().determinant(), 0.0);
}

TEST(FrictionMatrix, NullVectorAndSpectrum) {
  for (double sigma : {0.1, 0.5, 1.0, 3.0, 17.0}) {
    const auto c = friction_matrix(sigma);
    EXPECT_LT((c.matrix() * VecN<2>(1.0, -sigma)).norm(), 1e-14);
    EXPECT_NEAR(c.eigenvalues()(1), 1.0 + 1.0 / (sigma * sigma), 1e-12);
  }
}

TEST(FrictionMatrix, RejectsNonPositiveSigma) {
  for (double sigma : {0.0, -1.0}) {
    try {
      friction_matrix(sigma);
      FAIL() << "expected InvalidSigma";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::InvalidSigma);
    }
  }
}

TEST(Potential, DerivativeMatchesFiniteDifferences) {
  const std::vector<PotentialSpec> specs{
      PotentialSpec::flat(), PotentialSpec::symmetric(), PotentialSpec::asymmetric(),
      PotentialSpec::fourier({{0.7, 3, 0.2}, {-1.3, 1, 1.1}, {0.05, 5, -0.4}})};
  const double d = 1e-5;
  for (const auto& u : specs) {
    for (double x = -7.0; x < 7.0; x += 0.37) {
      const double fd = (u.value(x + d) - u.value(x - d)) / (2.0 * d);
      EXPECT_NEAR(u.derivative(x), fd, 1e-8 * std::max(1.0, std::abs(fd))) << u.name() << " x=" << x;
    }
  }
}

TEST(Potential, NamedShapes) {
  EXPECT_DOUBLE_EQ(PotentialSpec::symmetric().value(0.7), std::sin(0.7));
  EXPECT_DOUBLE_EQ(PotentialSpec::asymmetric().value(0.7), std::sin(0.7) + 0.4 * std::sin(1.4));
  EXPECT_EQ(PotentialSpec::flat().value(3.0), 0.0);
  EXPECT_TRUE(PotentialSpec::flat().is_flat());
  EXPECT_FALSE(PotentialSpec::asymmetric().is_flat());
  const auto u = PotentialSpec::asymmetric();
  EXPECT_NEAR(u.value(1.3), u.value(1.3 + 2.0 * std::numbers::pi), 1e-14);
}

TEST(Drift, ZeroSlipHasNoFriction) {
  DiskState s;
  s.v = 1.0;
  s.omega = -1.0;
  for (double sigma : {0.5, 1.0, 2.0}) {
    const auto [dv, dw] = drift(s, params(sigma, 0.1, 5.0, PotentialSpec::flat()));
    EXPECT_NEAR(dv, 0.0, 1e-15);
    EXPECT_NEAR(dw, 0.0, 1e-15);
  }
}

TEST(Drift, PotentialForceAtRest) {
  const auto [dv, dw] = drift(DiskState{}, params(1.0, 0.1, 5.0, PotentialSpec::symmetric()));
  EXPECT_DOUBLE_EQ(dv, -1.0);
  EXPECT_DOUBLE_EQ(dw, 0.0);
}

TEST(Drift, HandComputedFriction) {
  DiskState s;
  s.v = 1.0;
  s.omega = 1.0;
  const auto [dv, dw] = drift(s, params(1.0, 0.1, 5.0, PotentialSpec::flat()));
  EXPECT_NEAR(dv, -0.2, 1e-15);
  EXPECT_NEAR(dw, -0.2, 1e-15);
}

TEST(Drift, MatrixFormEqualsSlipForm) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> pos(0.1, 4.0);
  for (int k = 0; k < 500; ++k) {
    const auto p = params(pos(rng), pos(rng), pos(rng), PotentialSpec::asymmetric());
    DiskState s{n(rng), n(rng), n(rng), n(rng)};
    const auto [dv, dw] = drift(s, p);
    const double slip = s.v + s.omega;
    EXPECT_NEAR(dv, -p.potential.derivative(s.x) - p.c * slip, 1e-12);
    EXPECT_NEAR(dw, -p.c * slip / p.sigma, 1e-12);
  }
}

TEST(StepSvi, RestIsFixedForFlatPotential) {
  const auto p = params(0.5, 0.1, 5.0, PotentialSpec::flat());
  EXPECT_EQ(step_svi(DiskState{}, p, 0.01, {}), DiskState{});
}

TEST(StepSvi, OneStepFromRestOnSine) {
  const auto p = params(0.5, 0.1, 5.0, PotentialSpec::symmetric());
  const auto s = step_svi(DiskState{}, p, 0.01, {});
  EXPECT_DOUBLE_EQ(s.v, -0.01);
  EXPECT_DOUBLE_EQ(s.x, -0.0001);
  EXPECT_DOUBLE_EQ(s.theta, 0.0);
  EXPECT_DOUBLE_EQ(s.omega, 0.0);
}

TEST(StepSvi, FrictionlessStepIsSymplecticEuler) {
  const auto p = params(0.7, 0.0, 0.0, PotentialSpec::asymmetric());
  const DiskState s{0.3, -0.4, 1.0, 0.25};
  const double h = 0.05;
  const auto n = step_svi(s, p, h, {0.8, -1.2});
  const double v1 = s.v - h * p.potential.derivative(s.x);
  EXPECT_DOUBLE_EQ(n.v, v1);
  EXPECT_DOUBLE_EQ(n.x, s.x + h * v1);
  EXPECT_DOUBLE_EQ(n.omega, s.omega);
  EXPECT_DOUBLE_EQ(n.theta, s.theta + h * s.omega);
}

TEST(StepSvi, NoiseEntersThroughSqrtC) {
  const auto p = params(1.0, 0.0, 2.0, PotentialSpec::flat());
  const double h = 0.04;
  const auto n = step_svi(DiskState{}, p, h, {1.0, 0.0});
  // C^{1/2} = C / sqrt(2) at sigma = 1
  EXPECT_NEAR(n.v, 2.0 * 0.2 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(n.omega, 2.0 * 0.2 / std::sqrt(2.0), 1e-15);
}

TEST(StepSvi, RejectsNonPositiveStep) { EXPECT_THROW(step_svi(DiskState{}, DiskParams{}, 0.0, {}), Error); }

TEST(StepSvi, SminusIsExactlyConservedForFlatU) {
  const auto p = params(0.5, 0.1, 5.0, PotentialSpec::flat());
  const SlidingDisk disk(p);
  NormalStream rng(99);
  DiskState s{0.0, 1.5, 0.0, -0.25};
  const double s0 = decoupled_coords(s, p.sigma).first;
  double worst = 0.0;
  for (int k = 0; k < 100000; ++k) {
    s = disk.step(s, 0.01, {rng(), rng()});
    worst = std::max(worst, std::abs(decoupled_coords(s, p.sigma).first - s0));
  }
  EXPECT_LT(worst, 1e-11);
}

TEST(StepSvi, SminusIncrementIsForceImpulse) {
  const auto p = params(0.5, 0.1, 5.0, PotentialSpec::symmetric());
  const SlidingDisk disk(p);
  NormalStream rng(100);
  DiskState s;
  const double h = 0.01;
  for (int k = 0; k < 10000; ++k) {
    const auto n = disk.step(s, h, {rng(), rng()});
    const double ds = decoupled_coords(n, p.sigma).first - decoupled_coords(s, p.sigma).first;
    EXPECT_NEAR(ds, h * std::cos(s.x), 1e-12 * std::max(1.0, std::abs(n.v) + std::abs(n.omega)));
    s = n;
  }
}

TEST(StepSvi, OverrideReplacesFrictionAndNoise) {
  auto p = params(1.0, 0.5, 1.0, PotentialSpec::flat());
  MatN<2> d;
  d << 2.0, 0.0, 0.0, 0.5;
  p.dissipation_override = SymPSD2(d);
  const double h = 0.01;
  const DiskState s{0.0, 1.0, 0.0, 1.0};
  const auto n = step_svi(s, p, h, {1.0, 1.0});
  EXPECT_NEAR(n.v, 1.0 - h * 0.5 * 2.0 + std::sqrt(2.0) * 0.1, 1e-14);
  EXPECT_NEAR(n.omega, 1.0 - h * 0.5 * 0.5 + std::sqrt(0.5) * 0.1, 1e-14);
}

TEST(StepSvi, StrongConvergenceUnderCommonNoise) {
  // Coarse paths reuse the fine path's Brownian increments, summed pairwise.
  const auto p = params(0.5, 0.1, 5.0, PotentialSpec::asymmetric());
  const SlidingDisk disk(p);
  const double T = 1.0;
  const int levels = 4;
  const int finest = 1 << 10;
  std::vector<double> err(levels, 0.0);
  const int paths = 200;
  for (int path = 0; path < paths; ++path) {
    NormalStream rng(stream_seed(5, path));
    std::vector<std::pair<double, double>> dw(finest);
    const double hf = T / finest;
    for (auto& w : dw) w = {std::sqrt(hf) * rng(), std::sqrt(hf) * rng()};
    auto run = [&](int n) {
      const int ratio = finest / n;
      const double h = T / n;
      DiskState s;
      for (int k = 0; k < n; ++k) {
        double a = 0.0, b = 0.0;
        for (int j = 0; j < ratio; ++j) {
          a += dw[k * ratio + j].first;
          b += dw[k * ratio + j].second;
        }
        s = disk.step(s, h, {a / std::sqrt(h), b / std::sqrt(h)});
      }
      return s;
    };
    const auto ref = run(finest);
    for (int l = 0; l < levels; ++l) {
      const auto s = run(16 << l);
      err[l] += std::abs(s.x - ref.x) + std::abs(s.v - ref.v) + std::abs(s.omega - ref.omega);
    }
  }
  for (int l = 0; l + 1 < levels; ++l) {
    EXPECT_GT(err[l] / err[l + 1], std::pow(2.0, 0.5) * 0.9) << "level " << l;
  }
}

TEST(StepSvi, DeterministicPartConvergesAtFirstOrder) {
  const auto p = params(0.5, 0.1, 0.0, PotentialSpec::asymmetric());
  const SlidingDisk disk(p);
  auto run = [&](int n) {
    DiskState s{0.2, 1.0, 0.0, -0.5};
    for (int k = 0; k < n; ++k) s = disk.step(s, 2.0 / n, {});
    return s;
  };
  const auto ref = run(1 << 16);
  std::vector<double> e;
  for (int n : {256, 512, 1024}) e.push_back(std::abs(run(n).x - ref.x) + std::abs(run(n).v - ref.v));
  EXPECT_NEAR(std::log2(e[0] / e[1]), 1.0, 0.15);
  EXPECT_NEAR(std::log2(e[1] / e[2]), 1.0, 0.15);
}

TEST(Energy, Examples) {
  EXPECT_EQ(energy(DiskState{}, params(1.0, 0.1, 5.0, PotentialSpec::symmetric())), 0.0);
  EXPECT_DOUBLE_EQ(energy(DiskState{0.0, 1.0, 0.0, 1.0}, params(1.0, 0.1, 5.0, PotentialSpec::flat())), 1.0);
  for (double sigma : {0.3, 1.0, 4.0}) {
    EXPECT_DOUBLE_EQ(energy(DiskState{std::numbers::pi / 2, 2.0, 0.0, 0.0},
                            params(sigma, 0.1, 5.0, PotentialSpec::symmetric())),
                     3.0);
  }
}

TEST(DecoupledCoords, Examples) {
  EXPECT_EQ(decoupled_coords(DiskState{0, 1, 0, 1}, 1.0), std::make_pair(0.0, 2.0));
  EXPECT_EQ(decoupled_coords(DiskState{0, 2, 0, 1}, 2.0), std::make_pair(0.0, 3.0));
  EXPECT_EQ(decoupled_coords(DiskState{}, 0.5), std::make_pair(0.0, 0.0));
}

TEST(DiffusionConstants, ClosedForms) {
  const auto p = params(1.0, 0.1, 5.0, PotentialSpec::flat());
  EXPECT_NEAR(diffusion_constant_xplustheta(p), 2500.0, 1e-9);
  EXPECT_NEAR(diffusion_constant_x_flatU(p), 625.0, 1e-9);
  EXPECT_EQ(diffusion_constant_xplustheta(params(1.0, 0.1, 0.0, PotentialSpec::flat())), 0.0);
  EXPECT_EQ(diffusion_constant_x_flatU(params(1.0, 0.1, 0.0, PotentialSpec::flat())), 0.0);
  const auto big = params(1e7, 0.1, 5.0, PotentialSpec::flat());
  EXPECT_NEAR(diffusion_constant_xplustheta(big), 2.0 * 25.0 / 0.01, 1e-6);
  for (double sigma : {0.2, 0.5, 3.0}) {
    const auto q = params(sigma, 0.3, 2.0, PotentialSpec::flat());
    EXPECT_NEAR(diffusion_constant_x_flatU(q), diffusion_constant_xplustheta(q) / ((sigma + 1) * (sigma + 1)), 1e-9);
  }
}

TEST(DiffusionConstants, RequireFriction) {
  try {
    diffusion_constant_xplustheta(params(1.0, 0.0, 5.0, PotentialSpec::flat()));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ZeroFriction);
  }
  EXPECT_THROW(diffusion_constant_x_flatU(params(1.0, 0.0, 5.0, PotentialSpec::flat())), Error);
}

TEST(BallisticBounds, Examples) {
  const auto [lo, hi] = ballistic_bounds(params(1.0, 0.1, 5.0, PotentialSpec::symmetric()));
  EXPECT_NEAR(lo, 15.625, 1e-12);
  EXPECT_NEAR(hi, 250.0, 1e-10);
  for (double sigma : {0.1, 0.5, 2.0}) {
    const auto [a, b] = ballistic_bounds(params(sigma, 0.37, 1.3, PotentialSpec::symmetric()));
    EXPECT_NEAR(b / a, 16.0, 1e-12);
  }
  // doubling c doubles beta
  const auto [a2, b2] = ballistic_bounds(params(1.0, 0.2, 5.0, PotentialSpec::symmetric()));
  EXPECT_NEAR(a2, lo / 2, 1e-12);
  EXPECT_NEAR(b2, hi / 2, 1e-10);
  try {
    ballistic_bounds(params(1.0, 0.1, 0.0, PotentialSpec::symmetric()));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ZeroNoise);
  }
}

TEST(StepControl, Examples) {
  const ControlState rest{std::numbers::pi / 2, 0.0};
  const auto same = step_control(rest, 0.1, 5.0, 0.01, 0.0);
  EXPECT_NEAR(same.X, rest.X, 1e-16);
  EXPECT_NEAR(same.V, 0.0, 1e-16);
  EXPECT_DOUBLE_EQ(step_control(ControlState{}, 0.1, 5.0, 0.01, 0.0).V, -0.01);
}

TEST(StepControl, OverdampedRelaxationIsMonotone) {
  // Frozen X isolates the V relaxation toward -cos(X)/c.
  const double c = 50.0, h = 1e-3, X = 0.4;
  ControlState s{X, 2.0};
  const double target = -std::cos(X) / c;
  double gap = std::abs(s.V - target);
  for (int k = 0; k < 200; ++k) {
    s = step_control({X, s.V}, c, 0.0, h, 0.0);
    const double g = std::abs(s.V - target);
    EXPECT_LE(g, gap);
    gap = g;
  }
  EXPECT_LT(gap, 1e-4);
}

TEST(EnergyBalance, DeterministicResidualIsFirstOrder) {
  for (auto u : {PotentialSpec::flat(), PotentialSpec::symmetric()}) {
    auto residual_at = [&](double h) {
      const auto p = params(0.5, 0.1, 0.0, u);
      const SlidingDisk disk(p);
      std::vector<DiskState> states{DiskState{0.0, 2.0, 0.0, -1.0}};
      const int n = static_cast<int>(std::llround(10.0 / h));
      for (int k = 0; k < n; ++k) states.push_back(disk.step(states.back(), h, {}));
      return std::abs(energy_balance_residual(states, p, h).back());
    };
    const double r1 = residual_at(0.01), r2 = residual_at(0.005);
    EXPECT_LT(r1, 0.05);
    EXPECT_GT(r1 / r2, 1.7) << u.name();
  }
}

TEST(EnergyBalance, FrictionlessNoiselessIsEnergyDrift) {
  const auto p = params(1.0, 0.0, 0.0, PotentialSpec::symmetric());
  const SlidingDisk disk(p);
  std::vector<DiskState> states{DiskState{0.0, 1.0, 0.0, 0.5}};
  for (int k = 0; k < 1000; ++k) states.push_back(disk.step(states.back(), 0.01, {}));
  const auto m = energy_balance_residual(states, p, 0.01);
  for (std::size_t k = 0; k < states.size(); ++k) {
    EXPECT_DOUBLE_EQ(m[k], energy(states[k], p) - energy(states[0], p));
    EXPECT_LT(std::abs(m[k]), 0.02);
  }
}
