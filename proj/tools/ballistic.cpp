// Command-line front end: simulate, ensemble, stats, scan-potential,
// reproduce-figure and validate.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "ballistic/harness/config.hpp"
#include "ballistic/harness/experiments.hpp"

namespace fs = std::filesystem;
using namespace ballistic;

namespace {

constexpr int kConfigError = 2;
constexpr int kRuntimeError = 3;

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;
  std::optional<std::string> out;
};

void setup_logging() {
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("BALLISTIC_LOG")) {
    const auto level = spdlog::level::from_str(env);
    // from_str maps unknown names to "off"; only honour it when asked for.
    if (level != spdlog::level::off || std::string(env) == "off") spdlog::set_level(level);
  }
  spdlog::set_pattern("[%H:%M:%S] [%l] %v");
}

bool is_config_error(Errc c) {
  return c == Errc::ParseError || c == Errc::ValidationError || c == Errc::UnknownFigure ||
         c == Errc::InvalidSigma;
}

int report(const std::string& code, const std::string& message, int exit_code) {
  nlohmann::json j{{"error", code}, {"message", message}, {"exit_code", exit_code}};
  std::cerr << j.dump() << '\n';
  return exit_code;
}

config::ExperimentConfig load(const Flags& f) {
  if (f.config.empty()) throw Error(Errc::ParseError, "--config is required");
  auto cfg = config::parse_config(f.config);
  if (f.seed) cfg.seed = *f.seed;
  if (f.workers) cfg.workers = *f.workers;
  if (f.out) cfg.output = *f.out;
  return cfg;
}

void finish(const config::ExperimentConfig& cfg, const harness::RunOutput& out, const std::string& started) {
  const fs::path dir = cfg.output;
  harness::write_manifest(dir, config::canonical_json(cfg), cfg.seed, out, cfg.defaulted, started);
  for (const auto& p : out.files) spdlog::info("wrote {}", p.string());
  if (!out.summary.empty()) std::cout << out.summary.dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();

  CLI::App app{"Stochastic rigid-body simulations and statistics", "ballistic"};
  app.require_subcommand(1);
  app.set_version_flag("--version", harness::kVersion);

  Flags flags;
  std::uint64_t seed_value = 1;
  unsigned workers_value = 0;
  std::string out_value;
  auto* seed_opt = app.add_option("--seed", seed_value, "Master seed (overrides the config)");
  auto* workers_opt = app.add_option("--workers", workers_value, "Worker threads; 0 uses every core");
  auto* out_opt = app.add_option("--out", out_value, "Output directory");
  app.add_option("--config", flags.config, "Experiment config (YAML)");

  auto* simulate = app.add_subcommand("simulate", "Run the configured model and write trajectories");
  auto* ensemble = app.add_subcommand("ensemble", "Run an ensemble and write mean/msd tables");
  auto* stats = app.add_subcommand("stats", "Run an ensemble and write the requested statistics");
  auto* scan = app.add_subcommand("scan-potential", "Sample the equilibrium potential and its critical points");
  auto* figure = app.add_subcommand("reproduce-figure", "Regenerate the data behind a named figure");
  auto* validate = app.add_subcommand("validate", "Parse and validate a config, printing its hash");

  std::string figure_name;
  figure->add_option("name", figure_name, "Figure name")->required();
  std::optional<std::size_t> fig_trajectories;
  std::optional<double> fig_horizon;
  std::optional<long> fig_motor_steps;
  std::optional<std::size_t> fig_realizations;
  figure->add_option("--trajectories", fig_trajectories, "Ensemble size for disk figures");
  figure->add_option("--horizon", fig_horizon, "Time horizon for disk figures");
  figure->add_option("--motor-steps", fig_motor_steps, "Steps per motor realization");
  figure->add_option("--realizations", fig_realizations, "Motor realizations");

  std::string validate_path;
  validate->add_option("config", validate_path, "Config file");

  for (auto* sub : {simulate, ensemble, stats, scan, figure, validate}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  if (*seed_opt) flags.seed = seed_value;
  if (*workers_opt) flags.workers = workers_value;
  if (*out_opt) flags.out = out_value;
  const std::string started = harness::utc_timestamp();

  try {
    if (*validate) {
      if (!validate_path.empty()) flags.config = validate_path;
      const auto cfg = load(flags);
      std::cout << nlohmann::json{{"valid", true},
                                  {"model", config::to_string(cfg.model)},
                                  {"config_hash", config::config_hash(cfg)},
                                  {"defaulted_keys", cfg.defaulted}}
                       .dump(2)
                << '\n';
      return 0;
    }

    if (*figure) {
      harness::FigureOptions o;
      o.seed = flags.seed.value_or(1);
      o.workers = flags.workers.value_or(0);
      o.n_trajectories = fig_trajectories;
      o.horizon = fig_horizon;
      o.motor_steps = fig_motor_steps;
      o.motor_realizations = fig_realizations;
      const fs::path dir = flags.out.value_or("out");
      spdlog::info("reproducing {} into {}", figure_name, dir.string());
      const auto out = harness::reproduce_figure(figure_name, o, dir);
      nlohmann::json canonical{{"figure", figure_name}, {"seed", o.seed}};
      if (o.n_trajectories) canonical["trajectories"] = *o.n_trajectories;
      if (o.horizon) canonical["horizon"] = *o.horizon;
      if (o.motor_steps) canonical["motor_steps"] = *o.motor_steps;
      if (o.motor_realizations) canonical["realizations"] = *o.motor_realizations;
      harness::write_manifest(dir, canonical, o.seed, out, {}, started);
      std::cout << out.summary.dump(2) << '\n';
      return 0;
    }

    if (*scan) {
      config::ExperimentConfig cfg;
      if (!flags.config.empty()) {
        cfg = load(flags);
        if (cfg.model != config::Model::Scan) throw Error(Errc::ValidationError, "scan-potential needs model: scan");
      } else {
        cfg.model = config::Model::Scan;
        if (flags.seed) cfg.seed = *flags.seed;
        if (flags.out) cfg.output = *flags.out;
      }
      finish(cfg, harness::run_simulate(cfg, cfg.output), started);
      return 0;
    }

    const auto cfg = load(flags);
    spdlog::info("model {} seed {} hash {}", config::to_string(cfg.model), cfg.seed, config::config_hash(cfg));
    harness::RunOutput out;
    if (*simulate) out = harness::run_simulate(cfg, cfg.output);
    else if (*ensemble) out = harness::run_ensemble_table(cfg, cfg.output);
    else out = harness::run_stats(cfg, cfg.output);
    finish(cfg, out, started);
    return 0;
  } catch (const Error& e) {
    return report(std::string(to_string(e.code())), e.what(), is_config_error(e.code()) ? kConfigError : kRuntimeError);
  } catch (const std::exception& e) {
    return report("RuntimeError", e.what(), kRuntimeError);
  }
}
