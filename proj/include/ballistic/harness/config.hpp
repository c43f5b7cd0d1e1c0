#pragma once

// Experiment configuration files (YAML) with a strict schema, and the
// canonical JSON echo used for manifests and config hashes.

#include <openssl/evp.h>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <yaml-cpp/yaml.h>

#include "ballistic/error.hpp"
#include "ballistic/hamel_top.hpp"
#include "ballistic/magnetic_motor.hpp"
#include "ballistic/magnetostatics.hpp"
#include "ballistic/sliding_disk.hpp"
#include "ballistic/statistics.hpp"

namespace ballistic::config {

enum class Model { Disk, Control, Top, Motor, Scan };

inline std::string to_string(Model m) {
  switch (m) {
    case Model::Disk: return "disk";
    case Model::Control: return "control";
    case Model::Top: return "top";
    case Model::Motor: return "motor";
    case Model::Scan: return "scan";
  }
  return "disk";
}

struct ScanSpec {
  RingSpec ring{};
  double plane_height = 0.018;
  double kappa2 = 1.0;
  GridSpec grid{-0.5, 0.5, -0.5, 0.5, 401, 401};
};

struct ExperimentConfig {
  Model model = Model::Disk;
  std::uint64_t seed = 1;
  unsigned workers = 0;
  std::string output = "out";
  std::vector<std::string> reports;

  DiskParams disk{};
  ControlParams control{};
  EnsembleSpec ensemble{};

  TopExperiment top{};
  TopCase top_case = TopCase::FrictionTilted;

  MotorParams motor{};
  MotorRunSpec motor_run{};
  std::size_t realizations = 1;

  ScanSpec scan{};

  // Keys that were left at their defaults, as dotted paths.
  std::vector<std::string> defaulted;
};

/// Walks one YAML mapping, recording consumed keys so leftovers are errors.
class Section {
 public:
  Section(YAML::Node node, std::string path, std::vector<std::string>* defaulted)
      : node_(std::move(node)), path_(std::move(path)), defaulted_(defaulted) {
    if (node_ && !node_.IsNull() && !node_.IsMap()) fail(node_, "expected a mapping");
  }

  bool has(const std::string& key) const { return node_ && node_.IsMap() && node_[key]; }

  template <class T>
  void get(const std::string& key, T& target) {
    used_.insert(key);
    if (!has(key)) {
      if (defaulted_) defaulted_->push_back(qualified(key));
      return;
    }
    const YAML::Node v = node_[key];
    try {
      target = v.as<T>();
    } catch (const YAML::Exception&) {
      fail(v, "bad value for '" + qualified(key) + "'");
    }
  }

  std::optional<YAML::Node> raw(const std::string& key) {
    used_.insert(key);
    if (!has(key)) return std::nullopt;
    return node_[key];
  }

  Section child(const std::string& key) {
    used_.insert(key);
    return Section(has(key) ? node_[key] : YAML::Node(), qualified(key), defaulted_);
  }

  /// Throws ParseError on any key that was never asked for.
  void finish() const {
    if (!node_ || !node_.IsMap()) return;
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!used_.count(key)) fail(kv.first, "unknown key '" + qualified(key) + "'");
    }
  }

  [[noreturn]] static void fail(const YAML::Node& at, const std::string& what) {
    const auto mark = at.Mark();
    std::ostringstream msg;
    msg << what;
    if (mark.line >= 0) msg << " at line " << mark.line + 1 << ", column " << mark.column + 1;
    throw Error(Errc::ParseError, msg.str());
  }

 private:
  std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  YAML::Node node_;
  std::string path_;
  std::vector<std::string>* defaulted_;
  std::set<std::string> used_;
};

namespace detail {

inline PotentialSpec parse_potential(const YAML::Node& n) {
  if (n.IsScalar()) {
    const auto name = n.as<std::string>();
    if (name == "flat") return PotentialSpec::flat();
    if (name == "symmetric") return PotentialSpec::symmetric();
    if (name == "asymmetric") return PotentialSpec::asymmetric();
    Section::fail(n, "unknown potential '" + name + "'");
  }
  Section s(n, "disk.potential", nullptr);
  auto terms_node = s.raw("fourier");
  s.finish();
  if (!terms_node || !terms_node->IsSequence()) Section::fail(n, "potential needs a name or a 'fourier' list");
  std::vector<FourierTerm> terms;
  for (const auto& t : *terms_node) {
    Section ts(t, "disk.potential.fourier[]", nullptr);
    FourierTerm term;
    ts.get("amplitude", term.amplitude);
    ts.get("harmonic", term.harmonic);
    ts.get("phase", term.phase);
    ts.finish();
    terms.push_back(term);
  }
  return PotentialSpec::fourier(std::move(terms));
}

inline void parse_ring(Section s, RingSpec& r) {
  s.get("radius", r.radius);
  s.get("height", r.height);
  s.get("count", r.count);
  s.get("tilt", r.tilt);
  s.get("azimuth", r.azimuth);
  s.get("moment", r.moment);
  s.finish();
}

inline void parse_vec2(Section& s, const std::string& key, Vec3& target) {
  if (auto n = s.raw(key)) {
    if (!n->IsSequence() || n->size() != 2) Section::fail(*n, "'" + key + "' must be a list of two numbers");
    target = Vec3((*n)[0].as<double>(), (*n)[1].as<double>(), 0.0);
  }
}

inline TopCase parse_top_case(const std::string& name, const YAML::Node& at) {
  for (TopCase c : kAllTopCases) {
    if (to_string(c) == name) return c;
  }
  Section::fail(at, "unknown top case '" + name + "' (conaxi, contilt, axi, tilt)");
}

/// Re-tags model validation failures as configuration errors.
template <class F>
void validating(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    if (e.code() == Errc::ParseError || e.code() == Errc::ValidationError) throw;
    std::string msg = e.what();
    const auto colon = msg.find(": ");
    throw Error(Errc::ValidationError, colon == std::string::npos ? msg : msg.substr(colon + 2));
  }
}

}  // namespace detail

/// Motor alpha shorthand: non-uniform drives only the ring; isothermal drives
/// ball and ring at one temperature (alpha_B = alpha_R, c_R = c_B).
inline void apply_motor_alpha(MotorParams& p, MotorMode mode, double alpha) {
  p.inner.alpha = alpha;
  if (mode == MotorMode::Isothermal) {
    p.ball.alpha = alpha;
    p.inner.friction = p.ball.friction;
  } else {
    p.ball.alpha = 0.0;
    p.inner.friction = 0.0;
  }
}

inline ExperimentConfig parse_config_node(const YAML::Node& root) {
  ExperimentConfig cfg;
  Section top(root, "", &cfg.defaulted);
  if (!root || !root.IsMap()) throw Error(Errc::ParseError, "config must be a mapping");

  std::string model;
  top.get("model", model);
  if (model == "disk") cfg.model = Model::Disk;
  else if (model == "control") cfg.model = Model::Control;
  else if (model == "top") cfg.model = Model::Top;
  else if (model == "motor") cfg.model = Model::Motor;
  else if (model == "scan") cfg.model = Model::Scan;
  else Section::fail(root["model"] ? root["model"] : root, "model must be one of disk, control, top, motor, scan");

  top.get("seed", cfg.seed);
  top.get("workers", cfg.workers);
  top.get("output", cfg.output);
  top.get("reports", cfg.reports);
  for (const auto& r : cfg.reports) {
    static const std::set<std::string> known{"mean", "msd", "exponent", "corr", "hist", "flights"};
    if (!known.count(r)) Section::fail(root["reports"], "unknown report '" + r + "'");
  }

  if (cfg.model == Model::Disk || cfg.model == Model::Control) {
    if (cfg.model == Model::Disk) {
      Section d = top.child("disk");
      d.get("sigma", cfg.disk.sigma);
      d.get("c", cfg.disk.c);
      d.get("alpha", cfg.disk.alpha);
      if (auto pot = d.raw("potential")) cfg.disk.potential = detail::parse_potential(*pot);
      if (auto ov = d.raw("dissipation")) {
        if (!ov->IsSequence() || ov->size() != 2) Section::fail(*ov, "dissipation must be a 2x2 list");
        MatN<2> m;
        for (int i = 0; i < 2; ++i) {
          for (int j = 0; j < 2; ++j) m(i, j) = (*ov)[i][j].as<double>();
        }
        detail::validating([&] { cfg.disk.dissipation_override = SymPSD2(m); });
      }
      d.finish();
    } else {
      Section c = top.child("control");
      c.get("c", cfg.control.c);
      c.get("alpha", cfg.control.alpha);
      c.finish();
    }
    Section e = top.child("ensemble");
    e.get("n_trajectories", cfg.ensemble.n_trajectories);
    e.get("horizon", cfg.ensemble.horizon);
    e.get("h", cfg.ensemble.h);
    e.get("record_stride", cfg.ensemble.record_stride);
    e.get("noise_replicas", cfg.ensemble.noise_replicas);
    std::string ic = "rest";
    e.get("initial_condition", ic);
    if (ic == "rest") cfg.ensemble.initial_condition = InitialCondition::Rest;
    else if (ic == "gibbs") cfg.ensemble.initial_condition = InitialCondition::GibbsSample;
    else Section::fail(root["ensemble"]["initial_condition"], "initial_condition must be rest or gibbs");
    e.finish();
  }

  if (cfg.model == Model::Top) {
    Section t = top.child("top");
    TopParams& p = cfg.top.params;
    t.get("mass", p.mass);
    t.get("radius", p.radius);
    t.get("inertia", p.inertia);
    t.get("inertia3", p.inertia3);
    t.get("ball_moment", p.ball_moment);
    t.get("gravity", p.gravity);
    t.get("friction", cfg.top.friction);
    t.get("tilt", cfg.top.tilt);
    t.get("tilt_azimuth", cfg.top.tilt_azimuth);
    t.get("h", cfg.top.h);
    t.get("steps", cfg.top.n_steps);
    t.get("record_stride", cfg.top.record_stride);
    t.get("full_attitude", cfg.top.full_attitude);
    detail::parse_vec2(t, "start", cfg.top.start);
    std::string which = std::string(to_string(cfg.top_case));
    t.get("case", which);
    if (t.has("case")) cfg.top_case = detail::parse_top_case(which, root["top"]["case"]);
    detail::parse_ring(t.child("ring"), p.ring);
    t.finish();
  }

  if (cfg.model == Model::Motor) {
    Section m = top.child("motor");
    std::string mode = "nonuniform";
    m.get("mode", mode);
    if (mode == "nonuniform") cfg.motor_run.mode = MotorMode::NonUniform;
    else if (mode == "isothermal") cfg.motor_run.mode = MotorMode::Isothermal;
    else Section::fail(root["motor"]["mode"], "mode must be nonuniform or isothermal");
    double alpha = cfg.motor_run.mode == MotorMode::Isothermal ? 1e-3 : 2e-4;
    m.get("alpha", alpha);
    apply_motor_alpha(cfg.motor, cfg.motor_run.mode, alpha);

    Section b = m.child("ball");
    b.get("mass", cfg.motor.ball.mass);
    b.get("radius", cfg.motor.ball.radius);
    b.get("inertia", cfg.motor.ball.inertia);
    b.get("friction", cfg.motor.ball.friction);
    b.get("alpha", cfg.motor.ball.alpha);
    b.get("weight", cfg.motor.ball.weight);
    b.finish();
    if (cfg.motor_run.mode == MotorMode::Isothermal && !(root["motor"]["inner"] && root["motor"]["inner"]["friction"])) {
      cfg.motor.inner.friction = cfg.motor.ball.friction;
    }
    Section r = m.child("inner");
    r.get("mass", cfg.motor.inner.mass);
    r.get("J", cfg.motor.inner.J);
    r.get("J3", cfg.motor.inner.J3);
    r.get("friction", cfg.motor.inner.friction);
    r.get("alpha", cfg.motor.inner.alpha);
    r.get("receiver_weight", cfg.motor.inner.receiver_weight);
    detail::parse_ring(r.child("ring"), cfg.motor.inner.spec);
    r.finish();
    detail::parse_ring(m.child("outer"), cfg.motor.outer);
    m.get("gravity", cfg.motor.gravity);
    m.get("h", cfg.motor_run.h);
    m.get("steps", cfg.motor_run.n_steps);
    m.get("record_stride", cfg.motor_run.record_stride);
    m.get("settle_steps", cfg.motor_run.settle_steps);
    m.get("realizations", cfg.realizations);
    detail::parse_vec2(m, "start", cfg.motor_run.start);
    m.finish();
  }

  if (cfg.model == Model::Scan) {
    Section s = top.child("scan");
    s.get("plane_height", cfg.scan.plane_height);
    s.get("kappa2", cfg.scan.kappa2);
    detail::parse_ring(s.child("ring"), cfg.scan.ring);
    Section g = s.child("grid");
    g.get("x_min", cfg.scan.grid.x_min);
    g.get("x_max", cfg.scan.grid.x_max);
    g.get("y_min", cfg.scan.grid.y_min);
    g.get("y_max", cfg.scan.grid.y_max);
    g.get("nx", cfg.scan.grid.nx);
    g.get("ny", cfg.scan.grid.ny);
    g.finish();
    s.finish();
  }
  top.finish();
  return cfg;
}

/// Checks every model invariant; failures are ValidationError.
inline void validate(const ExperimentConfig& cfg) {
  detail::validating([&] {
    switch (cfg.model) {
      case Model::Disk:
        cfg.disk.validate();
        cfg.ensemble.validate();
        break;
      case Model::Control:
        cfg.control.validate();
        cfg.ensemble.validate();
        break;
      case Model::Top:
        cfg.top.case_params(cfg.top_case).validate();
        if (!(cfg.top.h > 0.0) || cfg.top.n_steps < 0 || cfg.top.record_stride < 1) {
          throw Error(Errc::ValidationError, "top h must be positive, steps non-negative, record_stride >= 1");
        }
        break;
      case Model::Motor:
        if (cfg.motor_run.mode == MotorMode::Isothermal) cfg.motor.validate_isothermal();
        else cfg.motor.validate();
        if (!(cfg.motor_run.h > 0.0) || cfg.motor_run.n_steps < 0 || cfg.motor_run.record_stride < 1 ||
            cfg.realizations < 1) {
          throw Error(Errc::ValidationError, "motor h, steps, record_stride and realizations must be positive");
        }
        break;
      case Model::Scan:
        cfg.scan.ring.validate();
        if (!(cfg.scan.kappa2 > 0.0)) throw Error(Errc::ValidationError, "kappa2 must be positive");
        if (cfg.scan.grid.nx < 3 || cfg.scan.grid.ny < 3 || !(cfg.scan.grid.x_max > cfg.scan.grid.x_min) ||
            !(cfg.scan.grid.y_max > cfg.scan.grid.y_min)) {
          throw Error(Errc::ValidationError, "scan grid needs at least 3x3 points and a positive extent");
        }
        break;
    }
  });
}

inline ExperimentConfig parse_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(Errc::ParseError, "config file not found: " + path.string());
  YAML::Node root;
  try {
    root = YAML::LoadFile(path.string());
  } catch (const YAML::ParserException& e) {
    throw Error(Errc::ParseError, e.what());
  }
  auto cfg = parse_config_node(root);
  validate(cfg);
  return cfg;
}

inline ExperimentConfig parse_config_string(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw Error(Errc::ParseError, e.what());
  }
  auto cfg = parse_config_node(root);
  validate(cfg);
  return cfg;
}

namespace detail {

inline nlohmann::json ring_json(const RingSpec& r) {
  return {{"radius", r.radius}, {"height", r.height}, {"count", r.count},
          {"tilt", r.tilt},     {"azimuth", r.azimuth}, {"moment", r.moment}};
}

}  // namespace detail

/// Fully resolved configuration (defaults filled in). nlohmann::json keeps
/// object keys sorted, so the dump is independent of input key order.
inline nlohmann::json canonical_json(const ExperimentConfig& cfg) {
  using nlohmann::json;
  json j;
  j["model"] = to_string(cfg.model);
  j["seed"] = cfg.seed;
  j["reports"] = cfg.reports;
  switch (cfg.model) {
    case Model::Disk:
    case Model::Control: {
      if (cfg.model == Model::Disk) {
        json terms = json::array();
        for (const auto& t : cfg.disk.potential.terms()) {
          terms.push_back({{"amplitude", t.amplitude}, {"harmonic", t.harmonic}, {"phase", t.phase}});
        }
        j["disk"] = {{"sigma", cfg.disk.sigma},
                     {"c", cfg.disk.c},
                     {"alpha", cfg.disk.alpha},
                     {"potential", {{"name", cfg.disk.potential.name()}, {"terms", terms}}}};
        if (cfg.disk.dissipation_override) {
          const auto& m = cfg.disk.dissipation_override->matrix();
          j["disk"]["dissipation"] = {{m(0, 0), m(0, 1)}, {m(1, 0), m(1, 1)}};
        }
      } else {
        j["control"] = {{"c", cfg.control.c}, {"alpha", cfg.control.alpha}};
      }
      const auto& e = cfg.ensemble;
      j["ensemble"] = {{"n_trajectories", e.n_trajectories},
                       {"horizon", e.horizon},
                       {"h", e.h},
                       {"record_stride", e.record_stride},
                       {"noise_replicas", e.noise_replicas},
                       {"initial_condition", e.initial_condition == InitialCondition::Rest ? "rest" : "gibbs"}};
      break;
    }
    case Model::Top: {
      const auto& t = cfg.top;
      const auto& p = t.params;
      j["top"] = {{"case", std::string(to_string(cfg.top_case))},
                  {"mass", p.mass},
                  {"radius", p.radius},
                  {"inertia", p.inertia},
                  {"inertia3", p.inertia3},
                  {"ball_moment", p.ball_moment},
                  {"gravity", p.gravity},
                  {"friction", t.friction},
                  {"tilt", t.tilt},
                  {"tilt_azimuth", t.tilt_azimuth},
                  {"h", t.h},
                  {"steps", t.n_steps},
                  {"record_stride", t.record_stride},
                  {"full_attitude", t.full_attitude},
                  {"start", {t.start.x(), t.start.y()}},
                  {"ring", detail::ring_json(p.ring)}};
      break;
    }
    case Model::Motor: {
      const auto& m = cfg.motor;
      const auto& r = cfg.motor_run;
      j["motor"] = {{"mode", std::string(to_string(r.mode))},
                    {"ball",
                     {{"mass", m.ball.mass},
                      {"radius", m.ball.radius},
                      {"inertia", m.ball.inertia},
                      {"friction", m.ball.friction},
                      {"alpha", m.ball.alpha},
                      {"weight", m.ball.weight}}},
                    {"inner",
                     {{"mass", m.inner.mass},
                      {"J", m.inner.J},
                      {"J3", m.inner.J3},
                      {"friction", m.inner.friction},
                      {"alpha", m.inner.alpha},
                      {"receiver_weight", m.inner.receiver_weight},
                      {"ring", detail::ring_json(m.inner.spec)}}},
                    {"outer", detail::ring_json(m.outer)},
                    {"gravity", m.gravity},
                    {"h", r.h},
                    {"steps", r.n_steps},
                    {"record_stride", r.record_stride},
                    {"settle_steps", r.settle_steps},
                    {"realizations", cfg.realizations},
                    {"start", {r.start.x(), r.start.y()}}};
      break;
    }
    case Model::Scan: {
      const auto& g = cfg.scan.grid;
      j["scan"] = {{"plane_height", cfg.scan.plane_height},
                   {"kappa2", cfg.scan.kappa2},
                   {"ring", detail::ring_json(cfg.scan.ring)},
                   {"grid",
                    {{"x_min", g.x_min}, {"x_max", g.x_max}, {"y_min", g.y_min}, {"y_max", g.y_max},
                     {"nx", g.nx}, {"ny", g.ny}}}};
      break;
    }
  }
  return j;
}

inline std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(Errc::InvalidParameter, "SHA-256 digest failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xf];
  }
  return out;
}

inline std::string config_hash(const ExperimentConfig& cfg) { return sha256_hex(canonical_json(cfg).dump()); }

}  // namespace ballistic::config
