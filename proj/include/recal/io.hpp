#pragma once

// Config files and output formats.
//
// A config file is one JSON object whose keys are the CLI flag names without
// the leading dashes. Values given on the command line replace values from
// the file, which replace the defaults.

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "recal/errors.hpp"
#include "recal/geometry.hpp"
#include "recal/harness.hpp"
#include "recal/sweep.hpp"

namespace recal {

enum class OutputFormat { csv, json };

inline OutputFormat parse_format(std::string_view s) {
  if (s == "csv") return OutputFormat::csv;
  if (s == "json") return OutputFormat::json;
  throw ConfigError("format must be csv or json, got '" + std::string(s) + "'");
}

/// One layer of settings; unset fields fall through to the layer below.
struct ConfigLayer {
  std::optional<std::string> forecaster;
  std::optional<std::string> rule;
  std::optional<std::size_t> m;
  std::optional<double> exponent;
  std::optional<std::size_t> T;
  std::optional<std::string> oracle;
  std::optional<std::string> labels;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> format;
  std::optional<std::vector<std::size_t>> T_grid;
  std::optional<std::size_t> seeds;

  friend bool operator==(const ConfigLayer&, const ConfigLayer&) = default;
};

/// Fully merged settings for one CLI invocation.
struct Settings {
  ExperimentConfig experiment;
  std::string out = ".";
  OutputFormat format = OutputFormat::csv;
  std::vector<std::size_t> T_grid;
  std::size_t seeds = 1;
};

/// Default resolution when neither m nor exponent is set anywhere.
inline constexpr std::size_t kDefaultResolution = 8;

namespace detail {

template <class T>
T json_get(const nlohmann::json& j, std::string_view key) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config key '" + std::string(key) + "' has the wrong type");
  }
}

template <class T>
T json_unsigned(const nlohmann::json& j, std::string_view key) {
  if (!j.is_number_unsigned()) {
    throw ConfigError("config key '" + std::string(key) + "' must be a nonnegative integer");
  }
  return static_cast<T>(j.get<std::uint64_t>());
}

}  // namespace detail

inline ConfigLayer layer_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  ConfigLayer layer;
  for (const auto& [key, value] : j.items()) {
    if (key == "forecaster") {
      layer.forecaster = detail::json_get<std::string>(value, key);
    } else if (key == "rule") {
      layer.rule = detail::json_get<std::string>(value, key);
    } else if (key == "m") {
      layer.m = detail::json_unsigned<std::size_t>(value, key);
    } else if (key == "exponent") {
      if (!value.is_number()) throw ConfigError("config key 'exponent' must be a number");
      layer.exponent = value.get<double>();
    } else if (key == "T") {
      layer.T = detail::json_unsigned<std::size_t>(value, key);
    } else if (key == "oracle") {
      layer.oracle = detail::json_get<std::string>(value, key);
    } else if (key == "labels") {
      layer.labels = detail::json_get<std::string>(value, key);
    } else if (key == "seed") {
      layer.seed = detail::json_unsigned<std::uint64_t>(value, key);
    } else if (key == "out") {
      layer.out = detail::json_get<std::string>(value, key);
    } else if (key == "format") {
      layer.format = detail::json_get<std::string>(value, key);
    } else if (key == "T-grid") {
      if (!value.is_array()) throw ConfigError("config key 'T-grid' must be an array of integers");
      std::vector<std::size_t> grid;
      for (const auto& v : value) grid.push_back(detail::json_unsigned<std::size_t>(v, key));
      layer.T_grid = std::move(grid);
    } else if (key == "seeds") {
      layer.seeds = detail::json_unsigned<std::size_t>(value, key);
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  return layer;
}

inline nlohmann::json layer_to_json(const ConfigLayer& layer) {
  nlohmann::json j = nlohmann::json::object();
  if (layer.forecaster) j["forecaster"] = *layer.forecaster;
  if (layer.rule) j["rule"] = *layer.rule;
  if (layer.m) j["m"] = *layer.m;
  if (layer.exponent) j["exponent"] = *layer.exponent;
  if (layer.T) j["T"] = *layer.T;
  if (layer.oracle) j["oracle"] = *layer.oracle;
  if (layer.labels) j["labels"] = *layer.labels;
  if (layer.seed) j["seed"] = *layer.seed;
  if (layer.out) j["out"] = *layer.out;
  if (layer.format) j["format"] = *layer.format;
  if (layer.T_grid) j["T-grid"] = *layer.T_grid;
  if (layer.seeds) j["seeds"] = *layer.seeds;
  return j;
}

inline ConfigLayer parse_config_text(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return layer_from_json(j);
}

inline ConfigLayer load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

/// Applies a layer on top of settings. m and exponent replace each other, so a
/// layer that sets one of them clears the other from lower layers.
inline void apply_layer(Settings& s, const ConfigLayer& layer) {
  ExperimentConfig& e = s.experiment;
  if (layer.forecaster) e.forecaster = parse_forecaster(*layer.forecaster);
  if (layer.rule) e.rule = *layer.rule;
  if (layer.m || layer.exponent) {
    e.m = layer.m;
    e.exponent = layer.exponent;
  }
  if (layer.T) e.T = *layer.T;
  if (layer.oracle) e.oracle = *layer.oracle;
  if (layer.labels) e.labels = *layer.labels;
  if (layer.seed) e.seed = *layer.seed;
  if (layer.out) s.out = *layer.out;
  if (layer.format) s.format = parse_format(*layer.format);
  if (layer.T_grid) s.T_grid = *layer.T_grid;
  if (layer.seeds) s.seeds = *layer.seeds;
}

/// defaults < file < flags.
inline Settings merge_settings(const std::optional<ConfigLayer>& file, const ConfigLayer& flags) {
  Settings s;
  if (file) apply_layer(s, *file);
  apply_layer(s, flags);
  if (!s.experiment.m && !s.experiment.exponent) s.experiment.m = kDefaultResolution;
  return s;
}

/// The experiment part of a config, as it would be written in a config file.
inline nlohmann::json experiment_to_json(const ExperimentConfig& e) {
  nlohmann::json j;
  j["forecaster"] = std::string(to_string(e.forecaster));
  j["rule"] = e.rule;
  if (e.m) j["m"] = *e.m;
  if (e.exponent) j["exponent"] = *e.exponent;
  j["T"] = e.T;
  j["oracle"] = e.oracle;
  j["labels"] = e.labels;
  j["seed"] = e.seed;
  return j;
}

// ---------------------------------------------------------------------------
// Writers

/// Shortest round-trip decimal form ('.' separator, no grouping).
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

/// Writes to a sibling temp file and renames it over path.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline constexpr std::string_view kTraceHeader = "t,q,p,y,calib_l1,avg_regret,recal_rate,dist_to_target";

/// One row per round; metric columns are filled at checkpoints only.
inline std::string trace_csv(const Trace& trace) {
  std::string out;
  out.reserve(trace.rounds.size() * 32);
  out += kTraceHeader;
  out += '\n';
  std::size_t next = 0;
  for (const auto& r : trace.rounds) {
    out += std::to_string(r.t);
    out += ',';
    out += format_double(r.q);
    out += ',';
    out += format_double(r.p);
    out += ',';
    out += std::to_string(r.y);
    if (next < trace.checkpoints.size() && trace.checkpoints[next].t == r.t) {
      const Checkpoint& c = trace.checkpoints[next++];
      for (double v : {c.calibration, c.regret, c.recalibration, c.distance}) {
        out += ',';
        out += format_double(v);
      }
    } else {
      out += ",,,,";
    }
    out += '\n';
  }
  return out;
}

inline nlohmann::json checkpoints_json(const Trace& trace) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : trace.checkpoints) {
    arr.push_back({{"t", c.t},
                   {"calib_l1", c.calibration},
                   {"avg_regret", c.regret},
                   {"recal_rate", c.recalibration},
                   {"dist_to_target", c.distance}});
  }
  return arr;
}

inline std::string trace_json(const Trace& trace) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : trace.rounds) rows.push_back({{"t", r.t}, {"q", r.q}, {"p", r.p}, {"y", r.y}});
  nlohmann::json j;
  j["config"] = experiment_to_json(trace.config);
  j["rounds"] = std::move(rows);
  j["checkpoints"] = checkpoints_json(trace);
  return j.dump(2) + "\n";
}

/// Final metrics plus the config echo; wall_seconds < 0 omits the timing field.
inline nlohmann::json summary_json(const ResolvedExperiment& ex, const Trace& trace, double wall_seconds) {
  const GameConfig& g = ex.game;
  const BucketStats& st = trace.stats;
  const RecalibrationVector rv = st.recalibration_vector();
  nlohmann::json j;
  j["config"] = experiment_to_json(ex.config);
  j["m"] = g.m();
  j["lambda"] = g.lambda();
  j["lipschitz"] = g.lipschitz();
  j["rounds"] = st.rounds();
  j["calib_l1"] = st.calibration_rate();
  j["avg_regret"] = st.average_regret();
  j["recal_rate"] = st.recalibration_rate(default_delta(g.rule(), g.m()));
  j["delta"] = default_delta(g.rule(), g.m());
  j["recalibration_vector"] = {{"c", rv.c}, {"regret", rv.regret}};
  j["dist_to_target"] = trace.final_distance(g);
  j["approachability_bound"] = approachability_bound(g.m(), st.rounds());
  j["lifted_max"] = trace.lifted_max();
  j["f_evaluations"] = trace.f_evaluations;
  j["checkpoints"] = checkpoints_json(trace);
  if (wall_seconds >= 0.0) j["wall_seconds"] = wall_seconds;
  return j;
}

inline constexpr std::string_view kSweepHeader =
    "T,m,mean_calib,mean_regret,mean_recal_rate,stderr_calib,stderr_regret,stderr_recal_rate,mean_dist_to_target,"
    "bound";

inline std::string sweep_csv(const SweepResult& res) {
  std::string out(kSweepHeader);
  out += '\n';
  for (const auto& r : res.rows) {
    out += std::to_string(r.T) + ',' + std::to_string(r.m);
    for (double v : {r.calibration.mean, r.regret.mean, r.recalibration.mean, r.calibration.stderr_,
                     r.regret.stderr_, r.recalibration.stderr_, r.distance.mean, r.bound}) {
      out += ',';
      out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

inline nlohmann::json slope_json(const std::optional<SlopeFit>& fit) {
  if (!fit) return nullptr;
  return {{"slope", fit->slope}, {"intercept", fit->intercept}, {"r2", fit->r_squared}};
}

inline std::string sweep_json(const ExperimentConfig& base, std::span<const std::size_t> grid, std::size_t seeds,
                              const SweepResult& res) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : res.rows) {
    rows.push_back({{"T", r.T},
                    {"m", r.m},
                    {"mean_calib", r.calibration.mean},
                    {"mean_regret", r.regret.mean},
                    {"mean_recal_rate", r.recalibration.mean},
                    {"stderr_calib", r.calibration.stderr_},
                    {"stderr_regret", r.regret.stderr_},
                    {"stderr_recal_rate", r.recalibration.stderr_},
                    {"mean_dist_to_target", r.distance.mean},
                    {"max_dist_to_target", r.max_distance},
                    {"bound", r.bound}});
  }
  nlohmann::json j;
  j["config"] = experiment_to_json(base);
  j["T-grid"] = std::vector<std::size_t>(grid.begin(), grid.end());
  j["seeds"] = seeds;
  j["rows"] = std::move(rows);
  j["slopes"] = {{"calib", slope_json(res.calibration_slope)},
                 {"regret", slope_json(res.regret_slope)},
                 {"recal_rate", slope_json(res.recalibration_slope)}};
  return j.dump(2) + "\n";
}

}  // namespace recal
