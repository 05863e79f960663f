#pragma once

// Seed-averaged sweeps over the horizon T and log-log rate fits.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "recal/errors.hpp"
#include "recal/geometry.hpp"
#include "recal/harness.hpp"
#include "recal/metrics.hpp"

namespace recal {

struct SlopeFit {
  double slope;
  double intercept;
  double r_squared;
};

struct RatePoint {
  double T;
  double value;
};

/// Least squares of ln(value) on ln(T). r^2 is 1 when ln(value) is constant.
inline SlopeFit fit_loglog_slope(std::span<const RatePoint> points) {
  if (points.size() < 3) throw std::invalid_argument("slope fit needs at least 3 points");
  const double n = static_cast<double>(points.size());
  double sx = 0.0, sy = 0.0;
  for (const auto& pt : points) {
    if (!(pt.T > 0.0) || !(pt.value > 0.0)) {
      throw std::domain_error("slope fit needs positive T and values");
    }
    sx += std::log(pt.T);
    sy += std::log(pt.value);
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& pt : points) {
    const double dx = std::log(pt.T) - mx;
    const double dy = std::log(pt.value) - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (sxx == 0.0) throw std::domain_error("slope fit needs at least two distinct T");
  const double slope = sxy / sxx;
  const double intercept = my - slope * mx;
  double ss_res = 0.0;
  for (const auto& pt : points) {
    const double r = std::log(pt.value) - (intercept + slope * std::log(pt.T));
    ss_res += r * r;
  }
  const double r2 = syy == 0.0 ? 1.0 : 1.0 - ss_res / syy;
  return {slope, intercept, r2};
}

/// Final metrics of one (T, seed) run.
struct RunSummary {
  std::size_t T = 0;
  std::size_t m = 0;
  std::uint64_t seed = 0;
  double calibration = 0.0;
  double regret = 0.0;
  double recalibration = 0.0;
  double distance = 0.0;
};

inline RunSummary summarize(const ResolvedExperiment& ex, const Trace& trace) {
  const double delta = default_delta(ex.game.rule(), ex.game.m());
  return {ex.config.T,
          ex.game.m(),
          ex.config.seed,
          trace.stats.calibration_rate(),
          trace.stats.average_regret(),
          trace.stats.recalibration_rate(delta),
          trace.final_distance(ex.game)};
}

struct MeanStderr {
  double mean = 0.0;
  double stderr_ = 0.0;
};

/// Sample mean and standard error (0 for a single sample).
inline MeanStderr mean_stderr(std::span<const double> xs) {
  if (xs.empty()) throw std::invalid_argument("no samples");
  const double n = static_cast<double>(xs.size());
  double s = 0.0;
  for (double x : xs) s += x;
  const double mean = s / n;
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

struct SweepRow {
  std::size_t T = 0;
  std::size_t m = 0;
  MeanStderr calibration;
  MeanStderr regret;
  MeanStderr recalibration;
  MeanStderr distance;
  /// D G / sqrt(T) for this (m, T).
  double bound = 0.0;
  double max_distance = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<RunSummary> runs;
  /// Fits over rows with a positive mean; absent with fewer than 3 such rows.
  std::optional<SlopeFit> calibration_slope;
  std::optional<SlopeFit> regret_slope;
  std::optional<SlopeFit> recalibration_slope;
};

/// Worker count: RECAL_THREADS if set to a positive integer, else the core count.
inline std::size_t sweep_threads() {
  if (const char* env = std::getenv("RECAL_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace detail {

inline std::optional<SlopeFit> fit_positive(const std::vector<SweepRow>& rows, MeanStderr SweepRow::*field) {
  std::vector<RatePoint> pts;
  for (const auto& r : rows) {
    const double v = (r.*field).mean;
    if (v > 0.0) pts.push_back({static_cast<double>(r.T), v});
  }
  if (pts.size() < 3) return std::nullopt;
  return fit_loglog_slope(pts);
}

}  // namespace detail

/// Runs base with T replaced by each grid entry and seeds base.seed + k for
/// k < seeds. In exponent mode m is recomputed per T.
inline SweepResult sweep(const ExperimentConfig& base, std::span<const std::size_t> T_grid, std::size_t seeds,
                         std::size_t threads = sweep_threads()) {
  if (T_grid.empty()) throw ConfigError("T grid must be nonempty");
  if (seeds == 0) throw ConfigError("seed count must be positive");

  std::vector<ResolvedExperiment> jobs;
  jobs.reserve(T_grid.size() * seeds);
  for (std::size_t T : T_grid) {
    for (std::size_t k = 0; k < seeds; ++k) {
      ExperimentConfig cfg = base;
      cfg.T = T;
      cfg.seed = base.seed + k;
      jobs.push_back(resolve(cfg));
    }
  }

  std::vector<RunSummary> runs(jobs.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto work = [&] {
    for (;;) {
      const std::size_t j = next.fetch_add(1);
      if (j >= jobs.size()) return;
      try {
        runs[j] = summarize(jobs[j], run_experiment(jobs[j], RunOptions{.keep_rounds = false}));
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next.store(jobs.size());
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    const std::size_t n = std::min(std::max<std::size_t>(threads, 1), jobs.size());
    for (std::size_t i = 0; i < n; ++i) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);

  SweepResult out;
  for (std::size_t g = 0; g < T_grid.size(); ++g) {
    std::vector<double> cal, reg, rec, dist;
    for (std::size_t k = 0; k < seeds; ++k) {
      const RunSummary& r = runs[g * seeds + k];
      cal.push_back(r.calibration);
      reg.push_back(r.regret);
      rec.push_back(r.recalibration);
      dist.push_back(r.distance);
    }
    SweepRow row;
    row.T = T_grid[g];
    row.m = runs[g * seeds].m;
    row.calibration = mean_stderr(cal);
    row.regret = mean_stderr(reg);
    row.recalibration = mean_stderr(rec);
    row.distance = mean_stderr(dist);
    row.bound = approachability_bound(row.m, row.T);
    row.max_distance = *std::max_element(dist.begin(), dist.end());
    out.rows.push_back(row);
  }
  out.runs = std::move(runs);
  out.calibration_slope = detail::fit_positive(out.rows, &SweepRow::calibration);
  out.regret_slope = detail::fit_positive(out.rows, &SweepRow::regret);
  out.recalibration_slope = detail::fit_positive(out.rows, &SweepRow::recalibration);
  return out;
}

}  // namespace recal
