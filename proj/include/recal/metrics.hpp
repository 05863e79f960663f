#pragma once

// Measured calibration and regret of a realized forecast stream.
//
// Buckets are centred on the grid points i/m: bucket i collects forecasts in
// [i/m - 1/(2m), i/m + 1/(2m)), so a forecaster that only emits grid values
// lands exactly on bucket centres.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "recal/errors.hpp"
#include "recal/scoring.hpp"

namespace recal {

struct RecalibrationVector {
  std::vector<double> c;
  double regret = 0.0;
};

class BucketStats {
 public:
  explicit BucketStats(std::size_t m) : m_(m), counts_(m + 1, 0), label_sums_(m + 1, 0) {
    if (m == 0) throw ConfigError("bucket resolution m must be positive");
  }

  std::size_t m() const { return m_; }
  std::uint64_t rounds() const { return T_; }
  const std::vector<std::uint64_t>& counts() const { return counts_; }
  const std::vector<std::uint64_t>& label_sums() const { return label_sums_; }
  double cum_forecaster_score() const { return cum_forecaster_; }
  double cum_oracle_score() const { return cum_oracle_; }
  double epsilon() const { return 1.0 / static_cast<double>(m_); }

  std::size_t bucket_of(double p) const {
    check_probability(p, "forecast");
    const double v = std::floor(p * static_cast<double>(m_) + 0.5);
    return static_cast<std::size_t>(std::clamp(v, 0.0, static_cast<double>(m_)));
  }

  void record(double p, double q, int y, const ScoringRule& rule) {
    check_probability(q, "oracle forecast");
    check_label(y);
    const std::size_t i = bucket_of(p);
    ++counts_[i];
    label_sums_[i] += static_cast<std::uint64_t>(y);
    ++T_;
    cum_forecaster_ += rule.score_unchecked(p, y);
    cum_oracle_ += rule.score_unchecked(q, y);
  }

  /// Coordinate-wise sum; used to pool runs.
  BucketStats& operator+=(const BucketStats& o) {
    if (o.m_ != m_) throw std::invalid_argument("cannot merge bucket stats of different resolution");
    for (std::size_t i = 0; i <= m_; ++i) {
      counts_[i] += o.counts_[i];
      label_sums_[i] += o.label_sums_[i];
    }
    T_ += o.T_;
    cum_forecaster_ += o.cum_forecaster_;
    cum_oracle_ += o.cum_oracle_;
    return *this;
  }

  /// max(0, (1/T) sum_i n_i |i/m - rho_i| - eps/2); empty buckets contribute 0.
  double calibration_rate() const {
    require_rounds();
    double acc = 0.0;
    for (std::size_t i = 0; i <= m_; ++i) {
      if (counts_[i] == 0) continue;
      const double n = static_cast<double>(counts_[i]);
      const double rho = static_cast<double>(label_sums_[i]) / n;
      acc += n * std::abs(grid(i) - rho);
    }
    return std::max(0.0, acc / static_cast<double>(T_) - epsilon() / 2.0);
  }

  double average_regret() const {
    require_rounds();
    return (cum_forecaster_ - cum_oracle_) / static_cast<double>(T_);
  }

  /// max(0, calibration rate, average regret - delta/2).
  double recalibration_rate(double delta) const {
    return std::max({0.0, calibration_rate(), average_regret() - delta / 2.0});
  }

  /// c_i = (n_i/T)(i/m - rho_i), R = average regret.
  RecalibrationVector recalibration_vector() const {
    require_rounds();
    RecalibrationVector v;
    v.c.assign(m_ + 1, 0.0);
    const double T = static_cast<double>(T_);
    for (std::size_t i = 0; i <= m_; ++i) {
      if (counts_[i] == 0) continue;
      const double n = static_cast<double>(counts_[i]);
      v.c[i] = (n / T) * (grid(i) - static_cast<double>(label_sums_[i]) / n);
    }
    v.regret = average_regret();
    return v;
  }

 private:
  double grid(std::size_t i) const { return static_cast<double>(i) / static_cast<double>(m_); }

  void require_rounds() const {
    if (T_ == 0) throw std::domain_error("metrics need at least one recorded round");
  }

  std::size_t m_;
  std::vector<std::uint64_t> counts_;
  std::vector<std::uint64_t> label_sums_;
  std::uint64_t T_ = 0;
  double cum_forecaster_ = 0.0;
  double cum_oracle_ = 0.0;
};

/// Default regret allowance delta = 4 L_s / m^2.
inline double default_delta(const ScoringRule& rule, std::size_t m) {
  const double md = static_cast<double>(m);
  return 4.0 * rule.lipschitz() / (md * md);
}

}  // namespace recal
