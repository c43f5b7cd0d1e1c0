#pragma once

// Sliding disk with degenerate friction/noise acting on the slip velocity
// v + omega, and the 1-D Langevin control process used for comparison.

#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ballistic/error.hpp"
#include "ballistic/so3.hpp"

namespace ballistic {

/// One term a * sin(k x + phase) of a 2*pi-periodic potential.
struct FourierTerm {
  double amplitude = 0.0;
  int harmonic = 1;
  double phase = 0.0;
};

class PotentialSpec {
 public:
  enum class Kind { Flat, Symmetric, Asymmetric, Fourier };

  static PotentialSpec flat() { return PotentialSpec(Kind::Flat, {}); }
  static PotentialSpec symmetric() { return PotentialSpec(Kind::Symmetric, {{1.0, 1, 0.0}}); }
  static PotentialSpec asymmetric() {
    return PotentialSpec(Kind::Asymmetric, {{1.0, 1, 0.0}, {0.4, 2, 0.0}});
  }
  static PotentialSpec fourier(std::vector<FourierTerm> terms) {
    for (const auto& t : terms) {
      if (t.harmonic < 0 || !std::isfinite(t.amplitude) || !std::isfinite(t.phase)) {
        throw Error(Errc::InvalidParameter, "Fourier terms need finite amplitude/phase and harmonic >= 0");
      }
    }
    return PotentialSpec(Kind::Fourier, std::move(terms));
  }

  Kind kind() const { return kind_; }
  const std::vector<FourierTerm>& terms() const { return terms_; }

  double value(double x) const {
    double u = 0.0;
    for (const auto& t : terms_) u += t.amplitude * std::sin(t.harmonic * x + t.phase);
    return u;
  }

  double derivative(double x) const {
    double du = 0.0;
    for (const auto& t : terms_) du += t.amplitude * t.harmonic * std::cos(t.harmonic * x + t.phase);
    return du;
  }

  /// True when U is constant (no term with nonzero amplitude and harmonic).
  bool is_flat() const {
    for (const auto& t : terms_) {
      if (t.amplitude != 0.0 && t.harmonic != 0) return false;
    }
    return true;
  }

  std::string name() const {
    switch (kind_) {
      case Kind::Flat: return "flat";
      case Kind::Symmetric: return "symmetric";
      case Kind::Asymmetric: return "asymmetric";
      case Kind::Fourier: return "fourier";
    }
    return "fourier";
  }

 private:
  PotentialSpec(Kind kind, std::vector<FourierTerm> terms) : kind_(kind), terms_(std::move(terms)) {}

  Kind kind_;
  std::vector<FourierTerm> terms_;
};

struct DiskParams {
  double sigma = 0.5;
  double c = 0.1;
  double alpha = 5.0;
  PotentialSpec potential = PotentialSpec::symmetric();
  std::optional<SymPSD2> dissipation_override;

  void validate() const {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw Error(Errc::InvalidSigma, "sigma must be positive");
    if (!(c >= 0.0) || !std::isfinite(c)) throw Error(Errc::ValidationError, "c must be non-negative");
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw Error(Errc::ValidationError, "alpha must be non-negative");
  }

  /// Inverse temperature 2c/alpha^2; only defined with noise.
  double beta() const {
    if (!(alpha > 0.0)) throw Error(Errc::ZeroNoise, "beta requires alpha > 0");
    return 2.0 * c / (alpha * alpha);
  }
};

struct DiskState {
  double x = 0.0;
  double v = 0.0;
  double theta = 0.0;
  double omega = 0.0;

  friend bool operator==(const DiskState&, const DiskState&) = default;
};

struct ControlState {
  double X = 0.0;
  double V = 0.0;

  friend bool operator==(const ControlState&, const ControlState&) = default;
};

struct DiskNoise {
  double z_v = 0.0;
  double z_omega = 0.0;
};

inline SymPSD2 friction_matrix(double sigma) {
  if (!(sigma > 0.0)) throw Error(Errc::InvalidSigma, "sigma must be positive");
  MatN<2> c;
  c << 1.0, 1.0 / sigma,
       1.0 / sigma, 1.0 / (sigma * sigma);
  return SymPSD2(c);
}

/// Friction/noise matrix in effect: the override when set, else the rank-one default.
inline SymPSD2 effective_dissipation(const DiskParams& p) {
  return p.dissipation_override ? *p.dissipation_override : friction_matrix(p.sigma);
}

inline std::pair<double, double> drift(const DiskState& s, const DiskParams& p, const MatN<2>& c) {
  const VecN<2> f = p.c * (c * VecN<2>(s.v, p.sigma * s.omega));
  return {-p.potential.derivative(s.x) - f(0), -f(1)};
}

inline std::pair<double, double> drift(const DiskState& s, const DiskParams& p) {
  return drift(s, p, effective_dissipation(p).matrix());
}

/// Precomputed C and C^{1/2} for repeated stepping of one parameter set.
class SlidingDisk {
 public:
  explicit SlidingDisk(DiskParams params)
      : params_(std::move(params)),
        c_((params_.validate(), effective_dissipation(params_))),
        sqrt_c_(psd_sqrt(c_)) {}

  const DiskParams& params() const { return params_; }
  const SymPSD2& dissipation() const { return c_; }
  const SymPSD2& dissipation_sqrt() const { return sqrt_c_; }

  /// Stochastic variational Euler step: momenta from the current state, then
  /// positions from the updated momenta.
  DiskState step(const DiskState& s, double h, DiskNoise z) const {
    const auto [dv, domega] = drift(s, params_, c_.matrix());
    const double sqrt_h = std::sqrt(h);
    const VecN<2> kick = params_.alpha * (sqrt_c_.matrix() * VecN<2>(sqrt_h * z.z_v, sqrt_h * z.z_omega));
    DiskState next;
    next.v = s.v + h * dv + kick(0);
    next.omega = s.omega + h * domega + kick(1);
    next.x = s.x + h * next.v;
    next.theta = s.theta + h * next.omega;
    return next;
  }

 private:
  DiskParams params_;
  SymPSD2 c_;
  SymPSD2 sqrt_c_;
};

inline DiskState step_svi(const DiskState& s, const DiskParams& p, double h, DiskNoise z) {
  if (!(h > 0.0)) throw Error(Errc::InvalidParameter, "step requires h > 0");
  return SlidingDisk(p).step(s, h, z);
}

inline double energy(const DiskState& s, const DiskParams& p) {
  return 0.5 * s.v * s.v + 0.5 * p.sigma * s.omega * s.omega + p.potential.value(s.x);
}

/// (s_minus, s_plus) = (-v + sigma*omega, v + omega).
inline std::pair<double, double> decoupled_coords(const DiskState& s, double sigma) {
  return {-s.v + sigma * s.omega, s.v + s.omega};
}

inline double diffusion_constant_xplustheta(const DiskParams& p) {
  if (!(p.c > 0.0)) throw Error(Errc::ZeroFriction, "diffusion constant requires c > 0");
  const double s2 = p.sigma * p.sigma;
  return 2.0 * p.alpha * p.alpha * s2 / (p.c * p.c * (s2 + 1.0));
}

inline double diffusion_constant_x_flatU(const DiskParams& p) {
  const double d = diffusion_constant_xplustheta(p);
  return d / ((p.sigma + 1.0) * (p.sigma + 1.0));
}

/// Bounds on lim E_mu[(x_t - E x_t)^2] / t^2 for non-constant U.
inline std::pair<double, double> ballistic_bounds(const DiskParams& p) {
  if (!(p.alpha > 0.0)) throw Error(Errc::ZeroNoise, "ballistic bounds require alpha > 0");
  if (!(p.c > 0.0)) throw Error(Errc::ZeroFriction, "ballistic bounds require c > 0");
  const double beta = p.beta();
  return {1.0 / (4.0 * beta * (1.0 + p.sigma)), 4.0 / (beta * (1.0 + p.sigma))};
}

struct ControlParams {
  double c = 0.1;
  double alpha = 5.0;

  void validate() const {
    if (!(c >= 0.0) || !std::isfinite(c)) throw Error(Errc::ValidationError, "c must be non-negative");
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw Error(Errc::ValidationError, "alpha must be non-negative");
  }
  double beta() const {
    if (!(alpha > 0.0)) throw Error(Errc::ZeroNoise, "beta requires alpha > 0");
    return 2.0 * c / (alpha * alpha);
  }
};

/// dV = -cV dt - cos(X) dt + alpha dB, same explicit pattern as the disk.
inline ControlState step_control(const ControlState& s, double c, double alpha, double h, double z) {
  ControlState next;
  next.V = s.V + h * (-c * s.V - std::cos(s.X)) + alpha * std::sqrt(h) * z;
  next.X = s.X + h * next.V;
  return next;
}

/// Energy-balance residual M_k = E_k - E_0 + c*sum_{j<k} h (v_j + omega_j)^2
/// - (alpha^2/2)(1 + 1/sigma) t_k along a full-resolution trajectory.
/// The injection rate assumes the default friction matrix.
inline std::vector<double> energy_balance_residual(std::span<const DiskState> states, const DiskParams& p,
                                                   double h) {
  std::vector<double> m;
  if (states.empty()) return m;
  m.reserve(states.size());
  const double e0 = energy(states.front(), p);
  const double injection_rate = 0.5 * p.alpha * p.alpha * (1.0 + 1.0 / p.sigma);
  double dissipated = 0.0;
  for (std::size_t k = 0; k < states.size(); ++k) {
    if (k > 0) {
      const double slip = states[k - 1].v + states[k - 1].omega;
      dissipated += p.c * h * slip * slip;
    }
    const double t = h * static_cast<double>(k);
    m.push_back(energy(states[k], p) - e0 + dissipated - injection_rate * t);
  }
  return m;
}

}  // namespace ballistic
