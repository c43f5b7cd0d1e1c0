#pragma once

// CSV and JSON output for trajectories, reports and figure tables.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ballistic/error.hpp"
#include "ballistic/hamel_top.hpp"
#include "ballistic/magnetic_motor.hpp"
#include "ballistic/magnetostatics.hpp"
#include "ballistic/sliding_disk.hpp"
#include "ballistic/statistics.hpp"

namespace ballistic::io {

enum class NumberFormat { Shortest, Digits17 };

inline std::string format_number(double v, NumberFormat f = NumberFormat::Shortest) {
  char buf[64];
  if (f == NumberFormat::Digits17) {
    const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf, static_cast<std::size_t>(n));
  }
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, std::string_view header, NumberFormat format = NumberFormat::Shortest)
      : out_(path), format_(format), path_(path) {
    if (!out_) throw Error(Errc::ValidationError, "cannot open " + path.string() + " for writing");
    out_ << header << '\n';
  }

  void row(std::initializer_list<double> values) {
    bool first = true;
    for (double v : values) {
      if (!first) out_ << ',';
      out_ << format_number(v, format_);
      first = false;
    }
    out_ << '\n';
  }

  void row(const std::vector<double>& values) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i) out_ << ',';
      out_ << format_number(values[i], format_);
    }
    out_ << '\n';
  }

  const std::filesystem::path& path() const { return path_; }

 private:
  std::ofstream out_;
  NumberFormat format_;
  std::filesystem::path path_;
};

inline void write_disk_csv(const std::filesystem::path& path, const Trajectory<DiskState>& tr, const DiskParams& p) {
  CsvWriter w(path, "t,x,v,theta,omega,E", NumberFormat::Digits17);
  for (std::size_t k = 0; k < tr.states.size(); ++k) {
    const auto& s = tr.states[k];
    w.row({tr.times[k], s.x, s.v, s.theta, s.omega, energy(s, p)});
  }
}

inline void write_control_csv(const std::filesystem::path& path, const Trajectory<ControlState>& tr) {
  CsvWriter w(path, "t,X,V,E", NumberFormat::Digits17);
  for (std::size_t k = 0; k < tr.states.size(); ++k) {
    const auto& s = tr.states[k];
    w.row({tr.times[k], s.X, s.V, 0.5 * s.V * s.V + std::sin(s.X)});
  }
}

inline void write_top_csv(const std::filesystem::path& path, const TopRun& run) {
  CsvWriter w(path, "t,x1,x2,v1,v2,xi3x,xi3y,xi3z,pix,piy,piz,J,E");
  for (const auto& r : run.records) {
    const auto& s = r.state;
    w.row({r.t, s.x.x(), s.x.y(), s.v.x(), s.v.y(), s.xi3.x(), s.xi3.y(), s.xi3.z(), s.pi.x(), s.pi.y(), s.pi.z(),
           r.J, r.E});
  }
}

inline void write_motor_csv(const std::filesystem::path& path, const MotorRun& run) {
  CsvWriter w(path, "t,x1,x2,angle,E_total,E_ring,W_injected,W_dissipated");
  for (const auto& r : run.records) {
    w.row({r.t, r.x.x(), r.x.y(), r.angle, r.E_total, r.E_ring, r.W_injected, r.W_dissipated});
  }
}

inline void write_landscape_csv(const std::filesystem::path& path, const std::vector<LandscapeSample>& grid) {
  CsvWriter w(path, "x,y,Ve");
  for (const auto& s : grid) w.row({s.x, s.y, s.value});
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::ValidationError, "cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

/// Estimator outputs for one observable of one ensemble.
struct StatReport {
  std::vector<double> times;
  std::vector<double> mean;
  std::vector<double> variance;
  std::vector<double> msd;
  std::optional<PowerLawFit> exponent;
  std::vector<std::pair<double, double>> corr;  // (lag s, correlation)
  std::optional<Histogram> hist;
  std::vector<Flight> flights;
};

inline nlohmann::json to_json(const PowerLawFit& f) {
  return {{"slope", f.slope},
          {"intercept", f.intercept},
          {"r_squared", f.r_squared},
          {"t_min", f.window.t_min},
          {"t_max", f.window.t_max},
          {"points", f.points}};
}

inline nlohmann::json to_json(const Histogram& h) {
  nlohmann::json centers = nlohmann::json::array();
  for (std::size_t i = 0; i < h.counts.size(); ++i) centers.push_back(h.bin_center(i));
  return {{"lo", h.spec.lo},       {"hi", h.spec.hi},         {"bins", h.spec.bins},
          {"centers", centers},    {"counts", h.counts},      {"underflow", h.underflow},
          {"overflow", h.overflow}};
}

inline nlohmann::json to_json(const StatReport& r) {
  nlohmann::json j;
  j["mean"] = {{"t", r.times}, {"value", r.mean}, {"variance", r.variance}};
  j["msd"] = {{"t", r.times}, {"value", r.msd}};
  j["exponent"] = r.exponent ? to_json(*r.exponent) : nlohmann::json(nullptr);
  nlohmann::json corr = nlohmann::json::array();
  for (const auto& [s, c] : r.corr) corr.push_back({{"lag", s}, {"corr", c}});
  j["corr"] = corr;
  j["hist"] = r.hist ? to_json(*r.hist) : nlohmann::json(nullptr);
  nlohmann::json flights = nlohmann::json::array();
  for (const auto& f : r.flights) {
    flights.push_back({{"start", f.start}, {"duration", f.duration}, {"mean_velocity", f.mean_velocity}});
  }
  j["flights"] = flights;
  return j;
}

}  // namespace ballistic::io
