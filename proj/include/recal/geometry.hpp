#pragma once

// The vector-payoff game: a calibration block of m+1 coordinates plus one
// regret coordinate, the target set it must approach, and the box K of
// halfspace parameters used by the online learner.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "recal/distribution.hpp"
#include "recal/errors.hpp"
#include "recal/scoring.hpp"

namespace recal {

class GameConfig {
 public:
  /// Enforces the algorithm's input constraint m >= ceil(sqrt(4 L_s)).
  GameConfig(std::size_t m, ScoringRule rule) : GameConfig(m, rule, true) {}

  /// Same geometry without the resolution constraint. The halfspace
  /// inequality itself holds for every m >= 1, so property checks use this.
  static GameConfig relaxed(std::size_t m, ScoringRule rule) { return GameConfig(m, rule, false); }

  /// Smallest m with m^2 >= 4 L_s.
  static std::size_t min_resolution(const ScoringRule& rule) {
    const double four_l = 4.0 * rule.lipschitz();
    auto m = static_cast<std::size_t>(std::floor(std::sqrt(four_l)));
    while (static_cast<double>(m) * static_cast<double>(m) < four_l) ++m;
    return std::max<std::size_t>(m, 1);
  }

  std::size_t m() const { return m_; }
  std::size_t grid_size() const { return m_ + 1; }
  const ScoringRule& rule() const { return rule_; }
  double lipschitz() const { return rule_.lipschitz(); }
  /// Regret coordinates are divided by lambda = max(1, L_s) so |reg| <= 1.
  double lambda() const { return lambda_; }
  double cal_threshold() const { return cal_threshold_; }
  double reg_threshold() const { return reg_threshold_; }
  /// Unscaled regret allowance 4 L_s / m^2 (the delta of the recalibration rate).
  double raw_reg_threshold() const { return reg_threshold_ * lambda_; }

  double grid(std::size_t i) const { return static_cast<double>(i) / static_cast<double>(m_); }

  /// Grid index nearest to q (ties round up).
  std::size_t nearest_index(double q) const {
    const double v = std::floor(q * static_cast<double>(m_) + 0.5);
    return static_cast<std::size_t>(std::clamp(v, 0.0, static_cast<double>(m_)));
  }

 private:
  GameConfig(std::size_t m, ScoringRule rule, bool enforce_resolution)
      : m_(m), rule_(rule), lambda_(std::max(1.0, rule.lipschitz())) {
    if (m_ < 1) throw ConfigError("m must be a positive integer");
    if (enforce_resolution) {
      const std::size_t lo = min_resolution(rule_);
      if (m_ < lo) {
        throw ConfigError("m must be >= ceil(sqrt(4*L_s)) = " + std::to_string(lo) + " for rule " +
                          rule_.spec() + ", got " + std::to_string(m_));
      }
    }
    const double md = static_cast<double>(m_);
    cal_threshold_ = 1.0 / md;
    reg_threshold_ = 4.0 * rule_.lipschitz() / (lambda_ * md * md);
  }

  std::size_t m_;
  ScoringRule rule_;
  double lambda_;
  double cal_threshold_ = 0.0;
  double reg_threshold_ = 0.0;
};

/// A point (a, b) of K = { ||a||_inf <= 1, 0 <= b <= 1 }.
struct HalfspaceParam {
  std::vector<double> a;
  double b = 0.0;

  static HalfspaceParam zeros(std::size_t m) { return {std::vector<double>(m + 1, 0.0), 0.0}; }

  bool in_K() const {
    return b >= 0.0 && b <= 1.0 &&
           std::all_of(a.begin(), a.end(), [](double v) { return v >= -1.0 && v <= 1.0; });
  }

  bool is_zero() const {
    return b == 0.0 && std::all_of(a.begin(), a.end(), [](double v) { return v == 0.0; });
  }
};

/// Per-round payoff: calibration block plus the lambda-scaled regret coordinate.
struct PayoffVector {
  std::vector<double> cal;
  double reg = 0.0;

  static PayoffVector zeros(std::size_t m) { return {std::vector<double>(m + 1, 0.0), 0.0}; }

  double cal_l1() const {
    return std::accumulate(cal.begin(), cal.end(), 0.0, [](double s, double v) { return s + std::abs(v); });
  }

  PayoffVector& operator+=(const PayoffVector& o) {
    if (o.cal.size() != cal.size()) throw std::invalid_argument("payoff dimension mismatch");
    for (std::size_t i = 0; i < cal.size(); ++i) cal[i] += o.cal[i];
    reg += o.reg;
    return *this;
  }

  PayoffVector scaled(double s) const {
    PayoffVector out = *this;
    for (auto& v : out.cal) v *= s;
    out.reg *= s;
    return out;
  }

  double dot(const HalfspaceParam& theta) const {
    if (theta.a.size() != cal.size()) throw std::invalid_argument("payoff/halfspace dimension mismatch");
    return std::inner_product(cal.begin(), cal.end(), theta.a.begin(), 0.0) + reg * theta.b;
  }
};

/// Expected payoff of playing w against label y with oracle forecast q.
/// cal_i = w_i (i/m - y), reg = (1/lambda) sum_i w_i (S(i/m, y) - S(q, y)).
inline PayoffVector payoff_vector(const GameConfig& cfg, std::span<const double> w, double q, int y) {
  if (w.size() != cfg.grid_size()) {
    throw std::invalid_argument("distribution has " + std::to_string(w.size()) + " entries, expected " +
                                std::to_string(cfg.grid_size()));
  }
  check_probability(q, "oracle forecast");
  check_label(y);
  const ScoringRule& rule = cfg.rule();
  const double yd = static_cast<double>(y);
  const double oracle_score = rule.score_unchecked(q, y);
  PayoffVector out = PayoffVector::zeros(cfg.m());
  double reg = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] == 0.0) continue;
    const double p = cfg.grid(i);
    out.cal[i] = w[i] * (p - yd);
    reg += w[i] * (rule.score_unchecked(p, y) - oracle_score);
  }
  out.reg = reg / cfg.lambda();
  return out;
}

inline PayoffVector payoff_vector(const GameConfig& cfg, const ForecastDistribution& w, double q, int y) {
  for (const auto& atom : w.support()) {
    if (atom.index > cfg.m()) throw std::invalid_argument("distribution index outside grid");
  }
  const auto dense = w.dense(cfg.m());
  return payoff_vector(cfg, dense, q, y);
}

/// acc += payoff_vector(cfg, w, q, y), touching only supp(w) in the calibration block.
inline void accumulate_payoff(const GameConfig& cfg, PayoffVector& acc, const ForecastDistribution& w, double q,
                              int y) {
  check_probability(q, "oracle forecast");
  check_label(y);
  const ScoringRule& rule = cfg.rule();
  const double oracle_score = rule.score_unchecked(q, y);
  double reg = 0.0;
  for (const auto& atom : w.support()) {
    const double p = cfg.grid(atom.index);
    acc.cal.at(atom.index) += atom.weight * (p - static_cast<double>(y));
    reg += atom.weight * (rule.score_unchecked(p, y) - oracle_score);
  }
  acc.reg += reg / cfg.lambda();
}

/// l1 distance to the target set: the l1 ball of radius 1/m in the calibration
/// block crossed with the half-line reg <= reg_threshold.
inline double dist_to_target(const GameConfig& cfg, const PayoffVector& v) {
  return std::max(0.0, v.cal_l1() - cfg.cal_threshold()) + std::max(0.0, v.reg - cfg.reg_threshold());
}

/// min over theta in K of <-v, theta>, in closed form.
inline double dual_linear_min(const PayoffVector& v) { return -v.cal_l1() - std::max(0.0, v.reg); }

/// Euclidean projection onto the box K. The last coordinate of raw is b.
inline HalfspaceParam project_onto_K(std::span<const double> raw) {
  if (raw.size() < 2) throw std::invalid_argument("halfspace vector needs at least 2 coordinates");
  HalfspaceParam out;
  out.a.resize(raw.size() - 1);
  for (std::size_t i = 0; i + 1 < raw.size(); ++i) out.a[i] = std::clamp(raw[i], -1.0, 1.0);
  out.b = std::clamp(raw.back(), 0.0, 1.0);
  return out;
}

/// l2 diameter of K.
inline double k_diameter(std::size_t m) { return std::sqrt(4.0 * static_cast<double>(m + 1) + 1.0); }

/// l2 bound on any payoff vector.
inline double payoff_norm_bound() { return std::sqrt(2.0); }

/// D G / sqrt(T): the per-run bound on dist_to_target of the average payoff.
inline double approachability_bound(std::size_t m, std::size_t T) {
  return k_diameter(m) * payoff_norm_bound() / std::sqrt(static_cast<double>(T));
}

}  // namespace recal
