#pragma once

// Orchestration of configured runs and the canonical figure reproductions.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <fmt/chrono.h>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "ballistic/harness/config.hpp"
#include "ballistic/harness/io.hpp"
#include "ballistic/statistics.hpp"

namespace ballistic::harness {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr const char* kVersion = "0.1.0";

struct RunOutput {
  std::vector<fs::path> files;
  json summary = json::object();

  void add(const fs::path& p) { files.push_back(p); }
};

inline std::string utc_timestamp(std::chrono::system_clock::time_point t = std::chrono::system_clock::now()) {
  return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::chrono::system_clock::to_time_t(t)));
}

inline void write_manifest(const fs::path& dir, const json& canonical, std::uint64_t seed, const RunOutput& out,
                           const std::vector<std::string>& defaulted, const std::string& started) {
  json files = json::array();
  for (const auto& f : out.files) files.push_back(fs::relative(f, dir).generic_string());
  json m;
  m["config"] = canonical;
  m["config_hash"] = config::sha256_hex(canonical.dump());
  m["master_seed"] = seed;
  m["version"] = kVersion;
  m["started"] = started;
  m["finished"] = utc_timestamp();
  m["outputs"] = files;
  m["defaulted_keys"] = defaulted;
  io::write_json(dir / "manifest.json", m);
}

/// Reduces an ensemble to one scalar observable per record.
template <class State>
Ensemble<double> scalar_ensemble(const Ensemble<State>& e, const Observable<State>& obs) {
  Ensemble<double> out;
  out.spec = e.spec;
  for (const auto& tr : e.trajectories) {
    Trajectory<double> t;
    t.times = tr.times;
    t.seed = tr.seed;
    t.group = tr.group;
    for (const auto& s : tr.states) t.states.push_back(obs(s));
    out.trajectories.push_back(std::move(t));
  }
  return out;
}

inline const Observable<double> kIdentity = [](const double& x) { return x; };

inline Ensemble<double> run_scalar_ensemble(const config::ExperimentConfig& cfg) {
  if (cfg.model == config::Model::Disk) {
    const auto e = run_ensemble(cfg.ensemble, DiskSystem(cfg.disk));
    return scalar_ensemble<DiskState>(e, [](const DiskState& s) { return s.x; });
  }
  const auto e = run_ensemble(cfg.ensemble, ControlSystem(cfg.control));
  return scalar_ensemble<ControlState>(e, [](const ControlState& s) { return s.X; });
}

/// Flight defaults: 100-sample window, threshold half the ensemble RMS velocity.
inline std::vector<Flight> ensemble_flights(const Ensemble<double>& e) {
  const auto& t = e.times();
  if (t.size() < 3) return {};
  double sq = 0.0;
  std::size_t n = 0;
  for (const auto& tr : e.trajectories) {
    for (std::size_t k = 1; k < t.size(); ++k) {
      const double v = (tr.states[k] - tr.states[k - 1]) / (t[k] - t[k - 1]);
      sq += v * v;
      ++n;
    }
  }
  const double threshold = 0.5 * std::sqrt(sq / static_cast<double>(n));
  const std::size_t window = std::min<std::size_t>(100, t.size() - 1);
  std::vector<Flight> all;
  if (window < 2) return all;
  for (const auto& tr : e.trajectories) {
    const auto f = detect_flights(t, tr.states, window, threshold);
    all.insert(all.end(), f.begin(), f.end());
  }
  return all;
}

inline io::StatReport stat_report(const Ensemble<double>& e, const std::vector<std::string>& requested) {
  auto want = [&](const char* name) {
    return requested.empty() || std::find(requested.begin(), requested.end(), name) != requested.end();
  };
  io::StatReport r;
  r.times = e.times();
  if (want("mean")) {
    r.mean = ensemble_mean(e, kIdentity);
    if (e.size() >= 2) r.variance = msd(e, kIdentity);
  }
  if (want("msd") || want("exponent")) {
    r.msd = e.size() >= 2 ? msd(e, kIdentity) : second_moment(e, kIdentity);
  }
  if (want("exponent") && r.times.size() > 2) {
    try {
      r.exponent = loglog_exponent(r.times, r.msd);
    } catch (const Error&) {
      r.exponent.reset();
    }
  }
  if (want("corr") && e.size() >= 2 && r.times.size() > 4) {
    const double t0 = r.times.back() / 2.0;
    const double dt = r.times[1] - r.times[0];
    const auto lags = static_cast<std::size_t>((r.times.back() - t0) / (2.0 * dt));
    const std::size_t step = std::max<std::size_t>(1, lags / 100);
    for (std::size_t k = 1; k <= lags; k += step) {
      try {
        r.corr.emplace_back(k * dt, increment_correlation(e, kIdentity, t0, k * dt));
      } catch (const Error&) {
      }
    }
  }
  if (want("hist")) {
    std::vector<double> last;
    for (const auto& tr : e.trajectories) last.push_back(tr.states.back());
    r.hist = histogram(last, auto_bins(last, 50));
  }
  if (want("flights")) r.flights = ensemble_flights(e);
  return r;
}

// ---------------------------------------------------------------------------
// Configured runs

/// Pushes the top-level seed and worker count into the per-model specs.
inline config::ExperimentConfig resolved(config::ExperimentConfig cfg) {
  cfg.ensemble.master_seed = cfg.seed;
  cfg.ensemble.workers = cfg.workers;
  cfg.motor_run.seed = cfg.seed;
  return cfg;
}

inline RunOutput run_simulate(config::ExperimentConfig cfg, const fs::path& dir) {
  cfg = resolved(std::move(cfg));
  RunOutput out;
  fs::create_directories(dir);
  switch (cfg.model) {
    case config::Model::Disk: {
      const auto e = run_ensemble(cfg.ensemble, DiskSystem(cfg.disk));
      for (std::size_t i = 0; i < e.size(); ++i) {
        const auto p = dir / fmt::format("trajectory_{}.csv", i);
        io::write_disk_csv(p, e.trajectories[i], cfg.disk);
        out.add(p);
      }
      break;
    }
    case config::Model::Control: {
      const auto e = run_ensemble(cfg.ensemble, ControlSystem(cfg.control));
      for (std::size_t i = 0; i < e.size(); ++i) {
        const auto p = dir / fmt::format("trajectory_{}.csv", i);
        io::write_control_csv(p, e.trajectories[i]);
        out.add(p);
      }
      break;
    }
    case config::Model::Top: {
      const auto run = run_experiment(cfg.top_case, cfg.top);
      const auto p = dir / fmt::format("top_{}.csv", to_string(cfg.top_case));
      io::write_top_csv(p, run);
      out.add(p);
      out.summary = {{"case", std::string(to_string(cfg.top_case))},
                     {"max_J_deviation", run.max_J_deviation},
                     {"terminal_J", run.terminal_J},
                     {"max_abs_J", run.max_abs_J}};
      break;
    }
    case config::Model::Motor: {
      std::vector<MotorRun> runs(cfg.realizations);
      parallel_for(cfg.realizations, cfg.workers, [&](std::size_t k) {
        MotorRunSpec spec = cfg.motor_run;
        spec.seed = stream_seed(cfg.seed, k);
        runs[k] = run_motor_experiment(cfg.motor, spec);
      });
      json real = json::array();
      for (std::size_t k = 0; k < runs.size(); ++k) {
        const auto p = dir / fmt::format("motor_{}.csv", k);
        io::write_motor_csv(p, runs[k]);
        out.add(p);
        const auto ledger = energy_ledger(runs[k].records);
        real.push_back({{"seed", runs[k].spec.seed},
                        {"final_angle", runs[k].records.back().angle},
                        {"flights", angular_flights(runs[k].records, {}).size()},
                        {"W_injected", ledger.injected.back()},
                        {"W_dissipated", ledger.dissipated.back()},
                        {"efficiency", ledger.efficiency ? json(*ledger.efficiency) : json(nullptr)}});
      }
      out.summary = {{"mode", std::string(to_string(cfg.motor_run.mode))}, {"realizations", real}};
      break;
    }
    case config::Model::Scan: {
      const auto ring = build_ring(cfg.scan.ring);
      const auto p = dir / "landscape.csv";
      io::write_landscape_csv(p, sample_landscape(ring, cfg.scan.plane_height, cfg.scan.grid, cfg.scan.kappa2));
      out.add(p);
      json cps = json::array();
      for (const auto& c : scan_critical_points(ring, cfg.scan.plane_height, cfg.scan.grid, cfg.scan.kappa2)) {
        cps.push_back({{"x", c.location.x()}, {"y", c.location.y()}, {"type", to_string(c.type)}, {"Ve", c.value}});
      }
      out.summary = {{"critical_points", cps}};
      const auto s = dir / "critical_points.json";
      io::write_json(s, out.summary);
      out.add(s);
      break;
    }
  }
  return out;
}

/// Ensemble run with the per-time mean and msd table of the displacement.
inline RunOutput run_ensemble_table(config::ExperimentConfig cfg, const fs::path& dir) {
  cfg = resolved(std::move(cfg));
  if (cfg.model != config::Model::Disk && cfg.model != config::Model::Control) {
    throw Error(Errc::ValidationError, "ensemble needs a disk or control model");
  }
  RunOutput out;
  fs::create_directories(dir);
  const auto e = run_scalar_ensemble(cfg);
  const auto mean = ensemble_mean(e, kIdentity);
  const auto second = second_moment(e, kIdentity);
  const auto var = e.size() >= 2 ? msd(e, kIdentity) : std::vector<double>(mean.size(), 0.0);
  const auto p = dir / "ensemble.csv";
  io::CsvWriter w(p, "t,mean,msd,second_moment");
  for (std::size_t k = 0; k < mean.size(); ++k) w.row({e.times()[k], mean[k], var[k], second[k]});
  out.add(p);
  return out;
}

inline RunOutput run_stats(config::ExperimentConfig cfg, const fs::path& dir) {
  cfg = resolved(std::move(cfg));
  if (cfg.model != config::Model::Disk && cfg.model != config::Model::Control) {
    throw Error(Errc::ValidationError, "stats needs a disk or control model");
  }
  RunOutput out;
  fs::create_directories(dir);
  const auto e = run_scalar_ensemble(cfg);
  const auto report = stat_report(e, cfg.reports);
  const auto j = dir / "report.json";
  io::write_json(j, io::to_json(report));
  out.add(j);
  const auto c = dir / "figure_stats.csv";
  io::CsvWriter w(c, "t,mean,msd");
  for (std::size_t k = 0; k < report.times.size(); ++k) {
    w.row({report.times[k], k < report.mean.size() ? report.mean[k] : 0.0, k < report.msd.size() ? report.msd[k] : 0.0});
  }
  out.add(c);
  if (report.exponent) out.summary["exponent"] = io::to_json(*report.exponent);
  return out;
}

// ---------------------------------------------------------------------------
// Figures

inline const std::vector<std::string>& figure_names() {
  static const std::vector<std::string> names{
      "meanX", "meanX2", "loglogX2", "diffusionX", "corX", "histX", "conaxi", "contilt", "axi", "tilt",
      "motor_theta_nonuniform", "motor_theta_isothermal", "potential_surface"};
  return names;
}

struct FigureOptions {
  std::uint64_t seed = 1;
  unsigned workers = 0;
  std::optional<std::size_t> n_trajectories;
  std::optional<double> horizon;
  std::optional<long> motor_steps;
  std::optional<std::size_t> motor_realizations;
};

struct DiskFigureCase {
  std::string name;
  Ensemble<double> x;
};

/// The four cases of the disk figures from rest: symmetric, asymmetric and
/// flat potentials at sigma = 1/2, and the 1-D control process.
inline std::vector<DiskFigureCase> disk_figure_cases(const FigureOptions& o, double horizon, std::size_t stride,
                                                     bool with_control = true) {
  EnsembleSpec spec;
  spec.n_trajectories = o.n_trajectories.value_or(256);
  spec.horizon = o.horizon.value_or(horizon);
  spec.h = 0.01;
  spec.record_stride = stride;
  spec.master_seed = o.seed;
  spec.workers = o.workers;
  spec.initial_condition = InitialCondition::Rest;
  if (spec.n_steps() % stride != 0) spec.record_stride = 1;

  std::vector<DiskFigureCase> cases;
  auto disk_x = [](const DiskState& s) { return s.x; };
  for (const auto& pot : {PotentialSpec::symmetric(), PotentialSpec::asymmetric(), PotentialSpec::flat()}) {
    DiskParams p;
    p.potential = pot;
    cases.push_back({pot.name(), scalar_ensemble<DiskState>(run_ensemble(spec, DiskSystem(p)), disk_x)});
  }
  if (with_control) {
    cases.push_back({"control", scalar_ensemble<ControlState>(run_ensemble(spec, ControlSystem({0.1, 5.0})),
                                                              [](const ControlState& s) { return s.X; })});
  }
  return cases;
}

inline void write_series_table(const fs::path& path, const std::vector<double>& t,
                               const std::vector<std::pair<std::string, std::vector<double>>>& columns) {
  std::string header = "t";
  for (const auto& c : columns) header += "," + c.first;
  io::CsvWriter w(path, header);
  for (std::size_t k = 0; k < t.size(); ++k) {
    std::vector<double> row{t[k]};
    for (const auto& c : columns) row.push_back(c.second[k]);
    w.row(row);
  }
}

inline RunOutput figure_disk(const std::string& name, const FigureOptions& o, const fs::path& dir) {
  RunOutput out;
  const fs::path csv = dir / ("figure_" + name + ".csv");
  if (name == "histX") {
    const auto cases = disk_figure_cases(o, 50000.0, 100000, false);
    std::vector<double> all;
    for (const auto& c : cases) {
      for (const auto& tr : c.x.trajectories) all.push_back(tr.states.back());
    }
    const BinSpec bins = auto_bins(all, 60);
    io::CsvWriter w(csv, "bin_center,symmetric,asymmetric,flat");
    std::vector<Histogram> hs;
    for (const auto& c : cases) {
      std::vector<double> last;
      for (const auto& tr : c.x.trajectories) last.push_back(tr.states.back());
      hs.push_back(histogram(last, bins));
      out.summary[c.name] = {{"iqr", interquartile_range(last)}, {"horizon", c.x.times().back()}};
    }
    for (std::size_t i = 0; i < bins.bins; ++i) {
      w.row({hs[0].bin_center(i), double(hs[0].counts[i]), double(hs[1].counts[i]), double(hs[2].counts[i])});
    }
    out.add(csv);
    return out;
  }

  const auto cases = disk_figure_cases(o, 2000.0, 100);
  const auto& t = cases.front().x.times();
  std::vector<std::pair<std::string, std::vector<double>>> cols;
  if (name == "meanX") {
    for (const auto& c : cases) cols.emplace_back(c.name, ensemble_mean(c.x, kIdentity));
  } else if (name == "meanX2" || name == "loglogX2") {
    for (const auto& c : cases) {
      auto m2 = second_moment(c.x, kIdentity);
      const auto fit = loglog_exponent(t, m2);
      out.summary[c.name] = io::to_json(fit);
      cols.emplace_back(c.name, std::move(m2));
    }
  } else if (name == "diffusionX") {
    for (const auto& c : cases) {
      auto m2 = second_moment(c.x, kIdentity);
      for (std::size_t k = 0; k < m2.size(); ++k) m2[k] = t[k] > 0.0 ? m2[k] / t[k] : 0.0;
      cols.emplace_back(c.name, std::move(m2));
    }
  } else if (name == "corX") {
    const double t0 = t.back() / 2.0;
    const double dt = t[1] - t[0];
    std::vector<double> lags;
    for (double s = dt; t0 + 2.0 * s <= t.back() + 1e-9; s += dt) lags.push_back(s);
    io::CsvWriter w(csv, "s,symmetric,asymmetric,flat,control");
    std::vector<std::vector<double>> corr(cases.size());
    for (std::size_t i = 0; i < cases.size(); ++i) {
      for (double s : lags) corr[i].push_back(increment_correlation(cases[i].x, kIdentity, t0, s));
    }
    for (std::size_t k = 0; k < lags.size(); ++k) w.row({lags[k], corr[0][k], corr[1][k], corr[2][k], corr[3][k]});
    for (std::size_t i = 0; i < cases.size(); ++i) {
      out.summary[cases[i].name] = {{"t", t0}, {"max_abs_corr", *std::max_element(corr[i].begin(), corr[i].end(),
                                                                                  [](double a, double b) {
                                                                                    return std::abs(a) < std::abs(b);
                                                                                  })}};
    }
    out.add(csv);
    return out;
  }
  write_series_table(csv, t, cols);
  out.add(csv);
  return out;
}

inline RunOutput figure_top(const std::string& name, const FigureOptions&, const fs::path& dir) {
  RunOutput out;
  TopCase which = TopCase::ConservativeAxisymmetric;
  for (TopCase c : kAllTopCases) {
    if (to_string(c) == name) which = c;
  }
  TopExperiment ex;
  const auto run = run_experiment(which, ex);
  const fs::path csv = dir / ("figure_" + name + ".csv");
  io::write_top_csv(csv, run);
  out.add(csv);
  double max_de = 0.0;
  for (const auto& r : run.records) max_de = std::max(max_de, std::abs(r.E - run.records.front().E));
  out.summary = {{"case", name},
                 {"h", ex.h},
                 {"steps", ex.n_steps},
                 {"friction", run.params.friction},
                 {"ring_tilt", run.params.ring.tilt},
                 {"ring_azimuth", run.params.ring.azimuth},
                 {"max_J_deviation", run.max_J_deviation},
                 {"terminal_J", run.terminal_J},
                 {"max_abs_J", run.max_abs_J},
                 {"max_energy_deviation", max_de}};
  return out;
}

inline RunOutput figure_motor(const std::string& name, const FigureOptions& o, const fs::path& dir) {
  RunOutput out;
  const bool iso = name == "motor_theta_isothermal";
  const std::vector<double> alphas = iso ? std::vector<double>{1e-3, 1e-3, 7.5e-4, 7.5e-4}
                                         : std::vector<double>{2e-4, 2e-4, 2.5e-4};
  const std::size_t n = o.motor_realizations.value_or(alphas.size());
  const MotorMode mode = iso ? MotorMode::Isothermal : MotorMode::NonUniform;
  std::vector<MotorRun> runs(n);
  std::vector<double> used_alpha(n);
  parallel_for(n, o.workers, [&](std::size_t k) {
    MotorParams p;
    used_alpha[k] = alphas[k % alphas.size()];
    config::apply_motor_alpha(p, mode, used_alpha[k]);
    MotorRunSpec spec;
    spec.mode = mode;
    spec.seed = stream_seed(o.seed, k);
    if (o.motor_steps) spec.n_steps = *o.motor_steps;
    runs[k] = run_motor_experiment(p, spec);
  });
  std::vector<std::pair<std::string, std::vector<double>>> cols;
  json panels = json::array();
  for (std::size_t k = 0; k < n; ++k) {
    const auto p = dir / fmt::format("motor_{}_{}.csv", name, k);
    io::write_motor_csv(p, runs[k]);
    out.add(p);
    std::vector<double> angle;
    for (const auto& r : runs[k].records) angle.push_back(r.angle);
    cols.emplace_back(fmt::format("angle_{}", k), std::move(angle));
    const auto flights = angular_flights(runs[k].records, {});
    const auto ledger = energy_ledger(runs[k].records);
    json fl = json::array();
    for (const auto& f : flights) {
      fl.push_back({{"start", f.start}, {"duration", f.duration}, {"mean_velocity", f.mean_velocity}});
    }
    panels.push_back({{"alpha", used_alpha[k]},
                      {"seed", runs[k].spec.seed},
                      {"final_angle", runs[k].records.back().angle},
                      {"flights", fl},
                      {"W_injected", ledger.injected.back()},
                      {"W_dissipated", ledger.dissipated.back()},
                      {"efficiency", ledger.efficiency ? json(*ledger.efficiency) : json(nullptr)}});
  }
  std::vector<double> t;
  for (const auto& r : runs.front().records) t.push_back(r.t);
  const fs::path csv = dir / ("figure_" + name + ".csv");
  write_series_table(csv, t, cols);
  out.add(csv);
  out.summary = {{"mode", std::string(to_string(mode))}, {"panels", panels}};
  return out;
}

inline RunOutput figure_potential_surface(const FigureOptions&, const fs::path& dir) {
  RunOutput out;
  struct Case {
    const char* label;
    double tilt, azimuth;
  };
  const Case cases[] = {{"untilted", 0.0, 0.0},
                        {"tilt_pi16_az0", std::numbers::pi / 16, 0.0},
                        {"tilt_pi16_azpi", std::numbers::pi / 16, std::numbers::pi}};
  const GridSpec grid{-6.0, 6.0, -6.0, 6.0, 241, 241};
  const double plane = 0.3;
  std::vector<std::vector<LandscapeSample>> surfaces;
  for (const auto& c : cases) {
    RingSpec r{4.0, 2.0, 25, c.tilt, c.azimuth, 1.0};
    const auto ring = build_ring(r);
    surfaces.push_back(sample_landscape(ring, plane, grid, 1.0));
    const auto p = dir / fmt::format("potential_surface_{}.csv", c.label);
    io::write_landscape_csv(p, surfaces.back());
    out.add(p);
    json cps = json::array();
    for (const auto& cp : scan_critical_points(ring, plane, grid, 1.0)) {
      cps.push_back({{"x", cp.location.x()}, {"y", cp.location.y()}, {"type", to_string(cp.type)}, {"Ve", cp.value}});
    }
    out.summary[c.label] = {{"tilt", c.tilt}, {"azimuth", c.azimuth}, {"critical_points", cps}};
  }
  const fs::path csv = dir / "figure_potential_surface.csv";
  io::CsvWriter w(csv, "x,y,Ve_untilted,Ve_tilt_pi16_az0,Ve_tilt_pi16_azpi");
  for (std::size_t i = 0; i < surfaces[0].size(); ++i) {
    w.row({surfaces[0][i].x, surfaces[0][i].y, surfaces[0][i].value, surfaces[1][i].value, surfaces[2][i].value});
  }
  out.add(csv);
  return out;
}

inline RunOutput reproduce_figure(const std::string& name, const FigureOptions& o, const fs::path& dir) {
  const auto& names = figure_names();
  if (std::find(names.begin(), names.end(), name) == names.end()) {
    throw Error(Errc::UnknownFigure, "unknown figure '" + name + "'");
  }
  fs::create_directories(dir);
  RunOutput out;
  if (name == "conaxi" || name == "contilt" || name == "axi" || name == "tilt") {
    out = figure_top(name, o, dir);
  } else if (name.rfind("motor_", 0) == 0) {
    out = figure_motor(name, o, dir);
  } else if (name == "potential_surface") {
    out = figure_potential_surface(o, dir);
  } else {
    out = figure_disk(name, o, dir);
  }
  out.summary["figure"] = name;
  const auto s = dir / ("figure_" + name + ".json");
  io::write_json(s, out.summary);
  out.add(s);
  return out;
}

}  // namespace ballistic::harness
