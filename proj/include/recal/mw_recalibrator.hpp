#pragma once

// Baseline: recalibration as online multiobjective optimization.
//
// The (m+2)-dimensional loss l = cal (+) reg is lifted to d = 2^(m+1) + 1
// coordinates by the +-1 matrix M (every sign pattern on the calibration
// block, then the regret coordinate alone), so that max_j (M l)_j =
// max(||cal||_1, reg). Multiplicative weights over the lifted coordinates
// is run implicitly: only the m+2 cumulative sums are stored, and the
// exponential sums over sign patterns factorize per coordinate.
//
// Regret is NOT divided by lambda here; the loss bound is C = max(1, L_s).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "recal/distribution.hpp"
#include "recal/errors.hpp"
#include "recal/geometry.hpp"
#include "recal/recalibrator.hpp"
#include "recal/rng.hpp"

namespace recal {

/// ln(2^(m+1) + 1) without forming 2^(m+1).
inline double lifted_log_dimension(std::size_t m) {
  const double k = static_cast<double>(m + 1);
  return k * std::numbers::ln2 + std::log1p(std::exp2(-k));
}

/// max_j (M w)_j for w = cal (+) reg.
inline double lifted_max_coordinate(std::span<const double> cal, double reg) {
  double l1 = 0.0;
  for (double v : cal) l1 += std::abs(v);
  return std::max(l1, reg);
}

/// Unscaled loss vector: cal_i = x_i (i/m - y), reg = sum_i x_i (S(i/m,y) - S(q,y)).
inline PayoffVector raw_loss_vector(const GameConfig& cfg, std::span<const double> x, double q, int y) {
  if (x.size() != cfg.grid_size()) throw std::invalid_argument("distribution has wrong dimension");
  check_probability(q, "oracle forecast");
  check_label(y);
  const double yd = static_cast<double>(y);
  const double oracle_score = cfg.rule().score_unchecked(q, y);
  PayoffVector out = PayoffVector::zeros(cfg.m());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] == 0.0) continue;
    const double p = cfg.grid(i);
    out.cal[i] = x[i] * (p - yd);
    out.reg += x[i] * (cfg.rule().score_unchecked(p, y) - oracle_score);
  }
  return out;
}

class MWState {
 public:
  /// Learning rate eta = sqrt(ln d / (4 T C^2)); requires T >= ln d.
  static MWState init(const GameConfig& cfg, std::size_t horizon) {
    const double log_d = lifted_log_dimension(cfg.m());
    if (static_cast<double>(horizon) < log_d) {
      throw ConfigError("multiplicative weights needs T >= ln(2^(m+1)+1) = " + std::to_string(log_d) +
                        ", got T = " + std::to_string(horizon));
    }
    const double c = std::max(1.0, cfg.lipschitz());
    const double eta = std::sqrt(log_d / (4.0 * static_cast<double>(horizon) * c * c));
    return MWState(cfg, eta);
  }

  const GameConfig& config() const { return cfg_; }
  double eta() const { return eta_; }
  std::size_t rounds() const { return t_; }
  std::size_t lifted_dimension_log2() const { return cfg_.m() + 1; }

  /// Stored values in log form: ln pos_exp_k = eta * sum_s l_k^s, ln neg_exp_k = -that.
  double log_pos_exp(std::size_t k) const { return eta_ * cum_cal_.at(k); }
  double log_neg_exp(std::size_t k) const { return -eta_ * cum_cal_.at(k); }
  double log_reg_exp() const { return eta_ * cum_reg_; }
  double pos_exp(std::size_t k) const { return std::exp(log_pos_exp(k)); }
  double neg_exp(std::size_t k) const { return std::exp(log_neg_exp(k)); }
  double reg_exp() const { return std::exp(log_reg_exp()); }

  std::span<const double> cumulative_cal() const { return cum_cal_; }
  double cumulative_reg() const { return cum_reg_; }

  /// ln( reg_exp + prod_k (pos_exp_k + neg_exp_k) ).
  double log_dp_denominator() const {
    const double log_prod = log_product();
    return log_add_exp(log_prod, log_reg_exp());
  }

  /// Sum of exp(eta * cumulative lifted loss) over all d coordinates.
  double dp_denominator() const { return std::exp(log_dp_denominator()); }

  /// <chi, M l> with chi the normalized lifted weights.
  ///
  /// The numerator term for coordinate k' carries prod_{k != k'} (pos_k + neg_k),
  /// i.e. the full product divided by (pos_k' + neg_k'); dividing through by the
  /// denominator leaves tanh(eta * sum l_k') per calibration coordinate.
  double dp_weighted_loss(const PayoffVector& l) const {
    if (l.cal.size() != cum_cal_.size()) throw std::invalid_argument("loss vector has wrong dimension");
    const Mix mix = mixing();
    double cal_part = 0.0;
    for (std::size_t k = 0; k < l.cal.size(); ++k) {
      if (l.cal[k] != 0.0) cal_part += std::tanh(eta_ * cum_cal_[k]) * l.cal[k];
    }
    return mix.reg_share * l.reg + mix.cal_share * cal_part;
  }

  double dp_weighted_loss(std::span<const double> x, double q, int y) const {
    return dp_weighted_loss(raw_loss_vector(cfg_, x, q, y));
  }

  /// Multiplicative update with a raw (m+2)-dimensional loss.
  void update(const PayoffVector& l) {
    if (l.cal.size() != cum_cal_.size()) throw std::invalid_argument("loss vector has wrong dimension");
    for (std::size_t k = 0; k < l.cal.size(); ++k) cum_cal_[k] += l.cal[k];
    cum_reg_ += l.reg;
    ++t_;
  }

  void update(std::span<const double> x, double q, int y) { update(raw_loss_vector(cfg_, x, q, y)); }

  /// argmin over the simplex of max_y <chi, M l(x, q, y)>.
  ///
  /// Both y-objectives are linear in x, so an optimum has at most two atoms:
  /// either a vertex, or a pair of vertices on which the two objectives
  /// cross. All O(m^2) such candidates are scanned.
  ForecastDistribution choose(double q, double* value = nullptr) const {
    check_probability(q, "oracle forecast");
    const std::size_t n = cfg_.grid_size();
    const Mix mix = mixing();
    const ScoringRule& rule = cfg_.rule();
    const double s0 = rule.score_unchecked(q, 0);
    const double s1 = rule.score_unchecked(q, 1);
    std::vector<double> g0(n), g1(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double p = cfg_.grid(i);
      const double cal_w = mix.cal_share * std::tanh(eta_ * cum_cal_[i]);
      g0[i] = mix.reg_share * (rule.score_unchecked(p, 0) - s0) + cal_w * p;
      g1[i] = mix.reg_share * (rule.score_unchecked(p, 1) - s1) + cal_w * (p - 1.0);
    }

    constexpr double kTieTol = 1e-14;
    // Vertices, nearest to q first, so ties resolve toward the nearest grid point.
    const std::size_t centre = cfg_.nearest_index(q);
    std::optional<ForecastDistribution> best;
    double best_value = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [centre](std::size_t a, std::size_t b) {
      const auto da = a > centre ? a - centre : centre - a;
      const auto db = b > centre ? b - centre : centre - b;
      return da < db;
    });
    for (std::size_t i : order) {
      const double v = std::max(g0[i], g1[i]);
      if (v < best_value - kTieTol) {
        best_value = v;
        best = ForecastDistribution::point(i);
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double di = g0[i] - g1[i];
      if (di < 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) {
        const double dj = g0[j] - g1[j];
        if (j == i || dj >= 0.0) continue;
        const double alpha = std::clamp(dj / (dj - di), 0.0, 1.0);
        const double v = alpha * g0[i] + (1.0 - alpha) * g0[j];
        if (v < best_value - kTieTol) {
          best_value = v;
          best = ForecastDistribution::mixture(i, alpha, j, 1.0 - alpha);
        }
      }
    }
    if (value) *value = best_value;
    return *best;
  }

 private:
  struct Mix {
    double cal_share;  // prod / denominator
    double reg_share;  // reg_exp / denominator
  };

  MWState(const GameConfig& cfg, double eta)
      : cfg_(cfg), eta_(eta), cum_cal_(cfg.grid_size(), 0.0) {}

  static double log_add_exp(double a, double b) {
    const double hi = std::max(a, b);
    return hi + std::log1p(std::exp(std::min(a, b) - hi));
  }

  /// ln prod_k (e^{z_k} + e^{-z_k}) with z_k = eta * sum_s l_k^s.
  double log_product() const {
    double acc = 0.0;
    for (double c : cum_cal_) {
      const double z = std::abs(eta_ * c);
      acc += z + std::log1p(std::exp(-2.0 * z));
    }
    return acc;
  }

  Mix mixing() const {
    const double lp = log_product();
    const double lr = log_reg_exp();
    const double hi = std::max(lp, lr);
    const double wp = std::exp(lp - hi);
    const double wr = std::exp(lr - hi);
    return {wp / (wp + wr), wr / (wp + wr)};
  }

  GameConfig cfg_;
  double eta_;
  std::vector<double> cum_cal_;
  double cum_reg_ = 0.0;
  std::size_t t_ = 0;
};

inline MWState mw_init(const GameConfig& cfg, std::size_t horizon) { return MWState::init(cfg, horizon); }

/// Forecaster wrapper: minimax choice, sampling, and the raw payoff ledger.
class MWRecalibrator {
 public:
  MWRecalibrator(const GameConfig& cfg, std::size_t horizon, std::uint64_t seed)
      : state_(MWState::init(cfg, horizon)), cum_raw_(PayoffVector::zeros(cfg.m())), rng_(seed) {}

  Prediction predict(double q) {
    if (pending_) throw ProtocolError("predict called twice without observe");
    const ForecastDistribution x = state_.choose(q);
    const std::size_t i = x.sample(rng_.uniform());
    pending_ = Pending{q, x};
    return {state_.config().grid(i), i, x};
  }

  void observe(double q, int y) {
    if (!pending_) throw ProtocolError("observe called without a pending prediction");
    if (pending_->q != q) throw ProtocolError("observe q does not match the pending prediction");
    const auto x = pending_->x.dense(state_.config().m());
    pending_.reset();
    const PayoffVector l = raw_loss_vector(state_.config(), x, q, y);
    cum_raw_ += l;
    state_.update(l);
  }

  const MWState& state() const { return state_; }
  /// Sum of unscaled expected loss vectors.
  const PayoffVector& cum_raw_payoff() const { return cum_raw_; }
  bool has_pending() const { return pending_.has_value(); }

  /// max(||avg cal||_1, avg regret) over the rounds so far.
  double lifted_max() const {
    if (state_.rounds() == 0) return 0.0;
    const PayoffVector avg = cum_raw_.scaled(1.0 / static_cast<double>(state_.rounds()));
    return lifted_max_coordinate(avg.cal, avg.reg);
  }

  /// max(1, L_s) (1/(2m) + 4 sqrt(ln d / T)).
  static double guarantee(const GameConfig& cfg, std::size_t T) {
    const double c = std::max(1.0, cfg.lipschitz());
    return c * (1.0 / (2.0 * static_cast<double>(cfg.m())) +
                4.0 * std::sqrt(lifted_log_dimension(cfg.m()) / static_cast<double>(T)));
  }

 private:
  struct Pending {
    double q;
    ForecastDistribution x;
  };

  MWState state_;
  PayoffVector cum_raw_;
  Rng rng_;
  std::optional<Pending> pending_;
};

}  // namespace recal
