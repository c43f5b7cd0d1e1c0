#pragma once

// Ensemble execution and the estimators used on disk, control and motor runs.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <exception>
#include <functional>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include "ballistic/error.hpp"
#include "ballistic/rng.hpp"
#include "ballistic/sliding_disk.hpp"

namespace ballistic {

enum class InitialCondition { Rest, GibbsSample };

struct EnsembleSpec {
  std::size_t n_trajectories = 2;
  double horizon = 1.0;
  double h = 0.01;
  std::size_t record_stride = 1;
  std::uint64_t master_seed = 0;
  InitialCondition initial_condition = InitialCondition::Rest;
  // Trajectories are grouped in blocks of this size sharing one sampled
  // initial condition, so noise-conditional moments can be estimated.
  std::size_t noise_replicas = 1;
  // 0 selects std::thread::hardware_concurrency(). Output never depends on it.
  unsigned workers = 1;

  std::size_t n_steps() const { return static_cast<std::size_t>(std::llround(horizon / h)); }
  std::size_t n_records() const { return n_steps() / record_stride + 1; }

  void validate() const {
    if (n_trajectories < 1) throw Error(Errc::ValidationError, "n_trajectories must be positive");
    if (!(h > 0.0) || !(horizon > 0.0)) throw Error(Errc::ValidationError, "h and horizon must be positive");
    const double steps = horizon / h;
    if (std::abs(steps - std::round(steps)) > 1e-9 * std::max(1.0, steps)) {
      throw Error(Errc::ValidationError, "horizon must be an integer number of steps");
    }
    if (record_stride < 1 || n_steps() % record_stride != 0) {
      throw Error(Errc::ValidationError, "record_stride must divide the number of steps");
    }
    if (noise_replicas < 1 || n_trajectories % noise_replicas != 0) {
      throw Error(Errc::ValidationError, "noise_replicas must divide n_trajectories");
    }
  }
};

template <class State>
struct Trajectory {
  std::vector<double> times;
  std::vector<State> states;
  std::uint64_t seed = 0;
  std::size_t group = 0;
};

template <class State>
struct Ensemble {
  EnsembleSpec spec;
  std::vector<Trajectory<State>> trajectories;

  std::size_t size() const { return trajectories.size(); }
  const std::vector<double>& times() const { return trajectories.front().times; }
};

template <class M>
concept SteppableSystem = requires(const M& m, const typename M::State& s, NormalStream& rng,
                                   InitialCondition ic, double h) {
  { m.initial(ic, rng) } -> std::same_as<typename M::State>;
  { m.step(s, h, rng) } -> std::same_as<typename M::State>;
};

inline constexpr std::uint64_t kInitialConditionSalt = 0x5eed'1c00'0000'0001ULL;

template <SteppableSystem Model>
Trajectory<typename Model::State> simulate_trajectory(const EnsembleSpec& spec, const Model& model,
                                                      std::size_t index) {
  using State = typename Model::State;
  Trajectory<State> traj;
  traj.group = index / spec.noise_replicas;
  traj.seed = stream_seed(spec.master_seed, index);
  NormalStream init_rng(stream_seed(spec.master_seed ^ kInitialConditionSalt, traj.group));
  NormalStream rng(traj.seed);

  const std::size_t n_steps = spec.n_steps();
  traj.times.reserve(spec.n_records());
  traj.states.reserve(spec.n_records());

  State s = model.initial(spec.initial_condition, init_rng);
  traj.times.push_back(0.0);
  traj.states.push_back(s);
  for (std::size_t k = 1; k <= n_steps; ++k) {
    s = model.step(s, spec.h, rng);
    if (k % spec.record_stride == 0) {
      traj.times.push_back(spec.h * static_cast<double>(k));
      traj.states.push_back(s);
    }
  }
  return traj;
}

/// Calls f(i) for i in [0, n) on up to `workers` threads (0 = all cores).
/// The first exception thrown by any call is rethrown after the pool joins.
template <class F>
void parallel_for(std::size_t n, unsigned workers, F&& f) {
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, std::max<std::size_t>(n, 1)));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  auto work = [&] {
    for (std::size_t i = next++; i < n && !failed; i = next++) {
      try {
        f(i);
      } catch (...) {
        if (!failed.exchange(true)) failure = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);
}

/// Runs every trajectory on its own RNG stream; the result is bit-identical
/// for a given spec regardless of the worker count.
template <SteppableSystem Model>
Ensemble<typename Model::State> run_ensemble(const EnsembleSpec& spec, const Model& model) {
  spec.validate();
  Ensemble<typename Model::State> out;
  out.spec = spec;
  out.trajectories.resize(spec.n_trajectories);
  parallel_for(spec.n_trajectories, spec.workers,
               [&](std::size_t i) { out.trajectories[i] = simulate_trajectory(spec, model, i); });
  return out;
}

// ---------------------------------------------------------------------------
// Gibbs sampling of the disk invariant measure

/// Inverse-CDF sampler for x on [0, 2pi) with density proportional to
/// exp(-beta U(x)), tabulated on a uniform grid.
class PeriodicGibbsSampler {
 public:
  static constexpr std::size_t kGridSize = 4096;

  PeriodicGibbsSampler(const std::function<double(double)>& potential, double beta) {
    const double dx = 2.0 * std::numbers::pi / kGridSize;
    std::vector<double> u(kGridSize);
    for (std::size_t i = 0; i < kGridSize; ++i) u[i] = potential((i + 0.5) * dx);
    const double u_min = *std::min_element(u.begin(), u.end());
    cdf_.resize(kGridSize);
    double acc = 0.0;
    for (std::size_t i = 0; i < kGridSize; ++i) {
      acc += std::exp(-beta * (u[i] - u_min));
      cdf_[i] = acc;
    }
    for (auto& c : cdf_) c /= acc;
    cdf_.back() = 1.0;
  }

  double sample(double uniform01) const {
    const double dx = 2.0 * std::numbers::pi / kGridSize;
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), uniform01);
    const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(it - cdf_.begin()), kGridSize - 1);
    const double lo = i == 0 ? 0.0 : cdf_[i - 1];
    const double width = cdf_[i] - lo;
    const double frac = width > 0.0 ? (uniform01 - lo) / width : 0.5;
    return (static_cast<double>(i) + std::clamp(frac, 0.0, 1.0)) * dx;
  }

 private:
  std::vector<double> cdf_;
};

inline void require_gibbs_params(double alpha, double c) {
  if (!(alpha > 0.0)) throw Error(Errc::ZeroNoise, "Gibbs sampling requires alpha > 0");
  if (!(c > 0.0)) throw Error(Errc::ZeroFriction, "Gibbs sampling requires c > 0");
}

inline DiskState gibbs_sample_initial(const DiskParams& p, const PeriodicGibbsSampler& x_sampler,
                                      NormalStream& rng) {
  require_gibbs_params(p.alpha, p.c);
  const double beta = p.beta();
  DiskState s;
  s.v = rng() / std::sqrt(beta);
  s.omega = rng() / std::sqrt(beta * p.sigma);
  s.theta = 2.0 * std::numbers::pi * rng.uniform();
  s.x = x_sampler.sample(rng.uniform());
  return s;
}

inline DiskState gibbs_sample_initial(const DiskParams& p, NormalStream& rng) {
  require_gibbs_params(p.alpha, p.c);
  const PeriodicGibbsSampler sampler([&](double x) { return p.potential.value(x); }, p.beta());
  return gibbs_sample_initial(p, sampler, rng);
}

class DiskSystem {
 public:
  using State = DiskState;

  explicit DiskSystem(DiskParams params) : disk_(std::move(params)) {
    const auto& p = disk_.params();
    if (p.alpha > 0.0 && p.c > 0.0) {
      sampler_.emplace([pot = p.potential](double x) { return pot.value(x); }, p.beta());
    }
  }

  const DiskParams& params() const { return disk_.params(); }
  const SlidingDisk& disk() const { return disk_; }

  State initial(InitialCondition ic, NormalStream& rng) const {
    if (ic == InitialCondition::Rest) return State{};
    if (!sampler_) require_gibbs_params(disk_.params().alpha, disk_.params().c);
    return gibbs_sample_initial(disk_.params(), *sampler_, rng);
  }

  State step(const State& s, double h, NormalStream& rng) const {
    const double z_v = rng();
    const double z_omega = rng();
    return disk_.step(s, h, {z_v, z_omega});
  }

 private:
  SlidingDisk disk_;
  std::optional<PeriodicGibbsSampler> sampler_;
};

class ControlSystem {
 public:
  using State = ControlState;

  explicit ControlSystem(ControlParams params) : params_(params) {
    params_.validate();
    if (params_.alpha > 0.0 && params_.c > 0.0) {
      sampler_.emplace([](double x) { return std::sin(x); }, params_.beta());
    }
  }

  const ControlParams& params() const { return params_; }

  State initial(InitialCondition ic, NormalStream& rng) const {
    if (ic == InitialCondition::Rest) return State{};
    if (!sampler_) require_gibbs_params(params_.alpha, params_.c);
    State s;
    s.V = rng() / std::sqrt(params_.beta());
    s.X = sampler_->sample(rng.uniform());
    return s;
  }

  State step(const State& s, double h, NormalStream& rng) const {
    return step_control(s, params_.c, params_.alpha, h, rng());
  }

 private:
  ControlParams params_;
  std::optional<PeriodicGibbsSampler> sampler_;
};

// ---------------------------------------------------------------------------
// Estimators

template <class State>
using Observable = std::function<double(const State&)>;

namespace detail {
template <class State>
std::vector<double> column(const Ensemble<State>& e, std::size_t k, const Observable<State>& obs) {
  std::vector<double> values;
  values.reserve(e.size());
  for (const auto& tr : e.trajectories) values.push_back(obs(tr.states[k]));
  return values;
}
}  // namespace detail

inline double sample_mean(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Unbiased sample variance (divisor n - 1).
inline double sample_variance(std::span<const double> v) {
  if (v.size() < 2) throw Error(Errc::TooFewTrajectories, "variance needs at least 2 samples");
  const double m = sample_mean(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return acc / static_cast<double>(v.size() - 1);
}

template <class State>
std::vector<double> ensemble_mean(const Ensemble<State>& e, const Observable<State>& obs) {
  std::vector<double> out;
  for (std::size_t k = 0; k < e.times().size(); ++k) out.push_back(sample_mean(detail::column(e, k, obs)));
  return out;
}

/// Ensemble variance of the observable around the ensemble mean at each time.
template <class State>
std::vector<double> msd(const Ensemble<State>& e, const Observable<State>& obs) {
  if (e.size() < 2) throw Error(Errc::TooFewTrajectories, "msd needs at least 2 trajectories");
  std::vector<double> out;
  for (std::size_t k = 0; k < e.times().size(); ++k) out.push_back(sample_variance(detail::column(e, k, obs)));
  return out;
}

/// Pooled within-group variance: the spread around the noise average
/// conditional on the (shared) initial condition of each replica group,
/// averaged over groups. Equals msd() when every group is the whole ensemble.
template <class State>
std::vector<double> conditional_msd(const Ensemble<State>& e, const Observable<State>& obs) {
  const std::size_t r = e.spec.noise_replicas;
  if (r < 2) throw Error(Errc::TooFewTrajectories, "conditional msd needs noise_replicas >= 2");
  const std::size_t groups = e.size() / r;
  std::vector<double> out;
  for (std::size_t k = 0; k < e.times().size(); ++k) {
    const auto col = detail::column(e, k, obs);
    double pooled = 0.0;
    for (std::size_t g = 0; g < groups; ++g) {
      pooled += sample_variance(std::span<const double>(col).subspan(g * r, r));
    }
    out.push_back(pooled / static_cast<double>(groups));
  }
  return out;
}

/// Raw second moment E[obs^2] (the "mean squared displacement" of a rest start).
template <class State>
std::vector<double> second_moment(const Ensemble<State>& e, const Observable<State>& obs) {
  std::vector<double> out;
  for (std::size_t k = 0; k < e.times().size(); ++k) {
    double acc = 0.0;
    for (const auto& tr : e.trajectories) {
      const double x = obs(tr.states[k]);
      acc += x * x;
    }
    out.push_back(acc / static_cast<double>(e.size()));
  }
  return out;
}

struct FitWindow {
  double t_min = 0.0;
  double t_max = 0.0;
};

struct PowerLawFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  FitWindow window;
  std::size_t points = 0;
};

/// Least-squares fit of log(series) against log(t). Default window is the
/// last decade of the positive recorded times.
inline PowerLawFit loglog_exponent(std::span<const double> times, std::span<const double> series,
                                   std::optional<FitWindow> window = std::nullopt) {
  if (times.size() != series.size() || times.empty()) {
    throw Error(Errc::InvalidParameter, "times and series must have equal, nonzero length");
  }
  FitWindow w;
  if (window) {
    w = *window;
  } else {
    w.t_max = times.back();
    w.t_min = w.t_max / 10.0;
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] <= 0.0 || times[i] < w.t_min || times[i] > w.t_max) continue;
    if (!(series[i] > 0.0)) throw Error(Errc::NonPositiveSeries, "series must be positive on the fit window");
    const double lx = std::log(times[i]);
    const double ly = std::log(series[i]);
    sx += lx; sy += ly; sxx += lx * lx; sxy += lx * ly; syy += ly * ly;
    ++n;
  }
  if (n < 2) throw Error(Errc::InvalidParameter, "fit window holds fewer than 2 points");
  const double dn = static_cast<double>(n);
  const double cov = sxy - sx * sy / dn;
  const double var_x = sxx - sx * sx / dn;
  const double var_y = syy - sy * sy / dn;
  PowerLawFit fit;
  fit.slope = cov / var_x;
  fit.intercept = (sy - fit.slope * sx) / dn;
  fit.r_squared = var_y > 0.0 ? (cov * cov) / (var_x * var_y) : 1.0;
  fit.window = w;
  fit.points = n;
  return fit;
}

inline double pearson_correlation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw Error(Errc::TooFewTrajectories, "correlation needs two equal-length samples of size >= 2");
  }
  const double ma = sample_mean(a);
  const double mb = sample_mean(b);
  double saa = 0, sbb = 0, sab = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
    sab += (a[i] - ma) * (b[i] - mb);
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) throw Error(Errc::DegenerateVariance, "increment variance is zero");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

/// Correlation of successive increments obs(t+2s)-obs(t+s) and obs(t+s)-obs(t)
/// across the ensemble; t and s are snapped to the record grid.
template <class State>
double increment_correlation(const Ensemble<State>& e, const Observable<State>& obs, double t, double s) {
  const auto& times = e.times();
  const double dt = times.size() > 1 ? times[1] - times[0] : 0.0;
  if (!(dt > 0.0)) throw Error(Errc::InvalidParameter, "ensemble has a single record");
  const auto k0 = static_cast<std::size_t>(std::llround(t / dt));
  const auto ks = static_cast<std::size_t>(std::llround(s / dt));
  if (ks == 0 || k0 + 2 * ks > times.size() - 1) {
    throw Error(Errc::InvalidParameter, "t + 2s must lie within the horizon and s must be positive");
  }
  std::vector<double> later, earlier;
  for (const auto& tr : e.trajectories) {
    const double x0 = obs(tr.states[k0]);
    const double x1 = obs(tr.states[k0 + ks]);
    const double x2 = obs(tr.states[k0 + 2 * ks]);
    later.push_back(x2 - x1);
    earlier.push_back(x1 - x0);
  }
  return pearson_correlation(later, earlier);
}

struct Flight {
  double start = 0.0;
  double duration = 0.0;
  double mean_velocity = 0.0;
};

/// Maximal runs where the window-W moving-average velocity keeps one sign and
/// magnitude at least `speed_threshold`. A run covering windows [k0, k1]
/// spans times t[k0] .. t[k1 + W].
inline std::vector<Flight> detect_flights(std::span<const double> times, std::span<const double> values,
                                          std::size_t window, double speed_threshold) {
  if (window < 2) throw Error(Errc::InvalidParameter, "flight window must be >= 2 samples");
  if (times.size() != values.size()) throw Error(Errc::InvalidParameter, "times/values length mismatch");
  std::vector<Flight> flights;
  if (values.size() <= window) return flights;
  const std::size_t n_windows = values.size() - window;

  auto velocity = [&](std::size_t k) { return (values[k + window] - values[k]) / (times[k + window] - times[k]); };
  auto close_run = [&](std::size_t k0, std::size_t k1) {
    Flight f;
    f.start = times[k0];
    f.duration = times[k1 + window] - times[k0];
    f.mean_velocity = (values[k1 + window] - values[k0]) / f.duration;
    flights.push_back(f);
  };

  std::optional<std::size_t> run_start;
  int run_sign = 0;
  for (std::size_t k = 0; k < n_windows; ++k) {
    const double v = velocity(k);
    const int sign = std::abs(v) >= speed_threshold && v != 0.0 ? (v > 0 ? 1 : -1) : 0;
    if (run_start && sign != run_sign) {
      close_run(*run_start, k - 1);
      run_start.reset();
    }
    if (!run_start && sign != 0) {
      run_start = k;
      run_sign = sign;
    }
  }
  if (run_start) close_run(*run_start, n_windows - 1);
  return flights;
}

struct SurvivalPoint {
  double duration = 0.0;
  double survival = 0.0;  // fraction of flights with duration >= this value
};

inline std::vector<SurvivalPoint> flight_survival(std::span<const Flight> flights) {
  std::vector<double> d;
  for (const auto& f : flights) d.push_back(f.duration);
  std::sort(d.begin(), d.end());
  std::vector<SurvivalPoint> out;
  const double n = static_cast<double>(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (i > 0 && d[i] == d[i - 1]) continue;
    out.push_back({d[i], static_cast<double>(d.size() - i) / n});
  }
  return out;
}

/// Maximum-likelihood tail fits of the flight durations: exponential rate of
/// the excess over the minimum, and the continuous power-law exponent (Hill).
struct DurationFits {
  double exponential_rate = 0.0;
  double power_law_exponent = 0.0;
  double min_duration = 0.0;
  std::size_t count = 0;
};

inline DurationFits fit_durations(std::span<const Flight> flights) {
  DurationFits fits;
  fits.count = flights.size();
  if (flights.empty()) return fits;
  double d_min = flights.front().duration;
  for (const auto& f : flights) d_min = std::min(d_min, f.duration);
  fits.min_duration = d_min;
  double excess = 0.0, log_ratio = 0.0;
  for (const auto& f : flights) {
    excess += f.duration - d_min;
    if (d_min > 0.0) log_ratio += std::log(f.duration / d_min);
  }
  const double n = static_cast<double>(flights.size());
  fits.exponential_rate = excess > 0.0 ? n / excess : 0.0;
  fits.power_law_exponent = log_ratio > 0.0 ? 1.0 + n / log_ratio : 0.0;
  return fits;
}

struct BinSpec {
  double lo = 0.0;
  double hi = 1.0;
  std::size_t bins = 10;
};

struct Histogram {
  BinSpec spec;
  std::vector<std::size_t> counts;
  std::size_t underflow = 0;
  std::size_t overflow = 0;

  std::size_t total() const {
    return std::accumulate(counts.begin(), counts.end(), underflow + overflow);
  }
  double bin_center(std::size_t i) const {
    const double w = (spec.hi - spec.lo) / static_cast<double>(spec.bins);
    return spec.lo + (static_cast<double>(i) + 0.5) * w;
  }
};

/// Fixed-width binning on [lo, hi); hi itself lands in the last bin.
inline Histogram histogram(std::span<const double> values, const BinSpec& spec) {
  if (values.empty()) throw Error(Errc::InvalidParameter, "histogram needs at least one value");
  if (spec.bins == 0 || !(spec.hi > spec.lo)) throw Error(Errc::InvalidParameter, "invalid bin spec");
  Histogram hist;
  hist.spec = spec;
  hist.counts.assign(spec.bins, 0);
  const double width = (spec.hi - spec.lo) / static_cast<double>(spec.bins);
  for (double v : values) {
    if (v < spec.lo) {
      ++hist.underflow;
    } else if (v > spec.hi) {
      ++hist.overflow;
    } else {
      auto i = static_cast<std::size_t>((v - spec.lo) / width);
      hist.counts[std::min(i, spec.bins - 1)]++;
    }
  }
  return hist;
}

/// Bin spec spanning the data range.
inline BinSpec auto_bins(std::span<const double> values, std::size_t bins) {
  if (values.empty()) throw Error(Errc::InvalidParameter, "histogram needs at least one value");
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  double a = *lo, b = *hi;
  if (a == b) {
    a -= 0.5;
    b += 0.5;
  }
  return {a, b, bins};
}

inline double interquartile_range(std::vector<double> values) {
  if (values.size() < 2) throw Error(Errc::InvalidParameter, "IQR needs at least 2 values");
  std::sort(values.begin(), values.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto i = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(i);
    return i + 1 < values.size() ? values[i] * (1 - frac) + values[i + 1] * frac : values[i];
  };
  return quantile(0.75) - quantile(0.25);
}

}  // namespace ballistic
