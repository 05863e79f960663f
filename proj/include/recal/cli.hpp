#pragma once

// `recal` command line: run, sweep and verify.
//
// Exit codes: 0 success, 1 runtime or property failure, 2 configuration error.

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "recal/errors.hpp"
#include "recal/harness.hpp"
#include "recal/io.hpp"
#include "recal/sweep.hpp"
#include "recal/verify.hpp"

namespace recal {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;

/// Parses "1024,4096,..." into horizons.
inline std::vector<std::size_t> parse_T_grid(std::string_view text) {
  std::vector<std::size_t> grid;
  if (text.empty()) return grid;
  std::string_view rest = text;
  for (;;) {
    const auto comma = rest.find(',');
    const std::string_view tok = rest.substr(0, comma);
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (tok.empty() || ec != std::errc{} || ptr != tok.data() + tok.size() || v == 0) {
      throw ConfigError("bad T-grid entry '" + std::string(tok) + "'");
    }
    grid.push_back(v);
    if (comma == std::string_view::npos) break;
    rest = rest.substr(comma + 1);
  }
  return grid;
}

namespace detail {

/// Flags shared by run and sweep; each lands in a ConfigLayer only when given.
struct ExperimentFlags {
  std::string config_path;
  std::string forecaster, rule, oracle, labels, out, format, T_grid;
  std::size_t m = 0, T = 0, seeds = 0;
  double exponent = 0.0;
  std::uint64_t seed = 0;
  CLI::Option* o_forecaster = nullptr;
  CLI::Option* o_rule = nullptr;
  CLI::Option* o_m = nullptr;
  CLI::Option* o_exponent = nullptr;
  CLI::Option* o_T = nullptr;
  CLI::Option* o_oracle = nullptr;
  CLI::Option* o_labels = nullptr;
  CLI::Option* o_seed = nullptr;
  CLI::Option* o_out = nullptr;
  CLI::Option* o_format = nullptr;
  CLI::Option* o_T_grid = nullptr;
  CLI::Option* o_seeds = nullptr;

  void attach(CLI::App& app, bool sweep) {
    app.add_option("--config", config_path, "JSON config file");
    o_forecaster = app.add_option("--forecaster", forecaster, "approach | mw | passthrough");
    o_rule = app.add_option("--rule", rule, "brier | log:<gamma>");
    o_m = app.add_option("--m", m, "grid resolution");
    o_exponent = app.add_option("--exponent", exponent, "tradeoff exponent x in [1/3, 2/5]; sets m = ceil(T^(1-2x))");
    o_T = app.add_option("--T", T, "horizon");
    o_oracle = app.add_option("--oracle", oracle, "truth | clairvoyant:<beta> | constant:<c> | noisy:<sigma>");
    o_labels = app.add_option("--labels", labels, "bernoulli:<pi> | periodic:<y,y,...> | adversarial");
    o_seed = app.add_option("--seed", seed, "64-bit seed");
    o_out = app.add_option("--out", out, "output directory");
    o_format = app.add_option("--format", format, "csv | json");
    if (sweep) {
      o_T_grid = app.add_option("--T-grid", T_grid, "comma-separated horizons");
      o_seeds = app.add_option("--seeds", seeds, "number of seeds per horizon");
    }
  }

  ConfigLayer layer() const {
    ConfigLayer l;
    if (o_forecaster->count()) l.forecaster = forecaster;
    if (o_rule->count()) l.rule = rule;
    if (o_m->count()) l.m = m;
    if (o_exponent->count()) l.exponent = exponent;
    if (o_T->count()) l.T = T;
    if (o_oracle->count()) l.oracle = oracle;
    if (o_labels->count()) l.labels = labels;
    if (o_seed->count()) l.seed = seed;
    if (o_out->count()) l.out = out;
    if (o_format->count()) l.format = format;
    if (o_T_grid && o_T_grid->count()) l.T_grid = parse_T_grid(T_grid);
    if (o_seeds && o_seeds->count()) l.seeds = seeds;
    return l;
  }

  Settings settings() const {
    std::optional<ConfigLayer> file;
    if (!config_path.empty()) file = load_config_file(config_path);
    return merge_settings(file, layer());
  }
};

}  // namespace detail

inline int cmd_run(const Settings& s, std::ostream& out) {
  const ResolvedExperiment ex = resolve(s.experiment);
  const auto start = std::chrono::steady_clock::now();
  const Trace trace = run_experiment(ex);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  const std::filesystem::path dir(s.out);
  const std::filesystem::path trace_path = dir / (s.format == OutputFormat::csv ? "trace.csv" : "trace.json");
  write_file_atomic(trace_path, s.format == OutputFormat::csv ? trace_csv(trace) : trace_json(trace));
  write_file_atomic(dir / "summary.json", summary_json(ex, trace, wall).dump(2) + "\n");

  const Checkpoint& last = trace.checkpoints.back();
  out << "m=" << ex.game.m() << " T=" << ex.config.T << " calib_l1=" << format_double(last.calibration)
      << " avg_regret=" << format_double(last.regret) << " recal_rate=" << format_double(last.recalibration)
      << " dist_to_target=" << format_double(last.distance) << "\n"
      << "wrote " << trace_path.string() << " and " << (dir / "summary.json").string() << "\n";
  return kExitOk;
}

inline int cmd_sweep(const Settings& s, std::ostream& out) {
  if (s.T_grid.empty()) throw ConfigError("--T-grid must list at least one horizon");
  const SweepResult res = sweep(s.experiment, s.T_grid, s.seeds);
  const std::filesystem::path dir(s.out);
  write_file_atomic(dir / "sweep.csv", sweep_csv(res));
  write_file_atomic(dir / "sweep.json", sweep_json(s.experiment, s.T_grid, s.seeds, res));

  auto show = [&](const char* name, const std::optional<SlopeFit>& f) {
    out << name << "_slope=";
    if (f) {
      out << format_double(f->slope) << " (r2=" << format_double(f->r_squared) << ")";
    } else {
      out << "n/a";
    }
    out << "\n";
  };
  show("calib", res.calibration_slope);
  show("regret", res.regret_slope);
  show("recal_rate", res.recalibration_slope);
  out << "wrote " << (dir / "sweep.csv").string() << " and " << (dir / "sweep.json").string() << "\n";
  return kExitOk;
}

inline int cmd_verify(const VerifyOptions& opt, std::ostream& out) {
  bool ok = true;
  for (const auto& r : run_all_checks(opt)) {
    out << (r.passed() ? "PASS " : "FAIL ") << r.name << " samples=" << r.samples << " violations=" << r.violations
        << " worst_slack=" << format_double(r.worst_slack) << "\n";
    ok = ok && r.passed();
  }
  return ok ? kExitOk : kExitFailure;
}

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Online recalibration of black-box probability forecasts", "recal"};
  app.require_subcommand(1);

  detail::ExperimentFlags run_flags, sweep_flags;
  CLI::App* run = app.add_subcommand("run", "run one experiment and write its trace");
  run_flags.attach(*run, false);
  CLI::App* sw = app.add_subcommand("sweep", "seed-averaged metrics over a grid of horizons");
  sweep_flags.attach(*sw, true);

  VerifyOptions vopt;
  CLI::App* ver = app.add_subcommand("verify", "randomized property checks");
  ver->add_flag("--quick", vopt.quick, "10x fewer samples");
  ver->add_option("--seed", vopt.seed, "seed for the sampled cases");
  // Mutation test of the halfspace check; intentionally undocumented in --help.
  ver->add_flag("--inject-sign-fault", vopt.inject_sign_fault)->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run) return cmd_run(run_flags.settings(), out);
    if (*sw) return cmd_sweep(sweep_flags.settings(), out);
    return cmd_verify(vopt, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace recal
