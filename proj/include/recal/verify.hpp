#pragma once

// Randomized property checks behind `recal verify`.
//
// Each check reports the number of samples, violations and the worst slack
// (bound minus observed value; negative means a violation).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "recal/geometry.hpp"
#include "recal/metrics.hpp"
#include "recal/mw_recalibrator.hpp"
#include "recal/recalibrator.hpp"
#include "recal/rng.hpp"
#include "recal/scoring.hpp"

namespace recal {

struct PropertyResult {
  std::string name;
  std::size_t samples = 0;
  std::size_t violations = 0;
  double worst_slack = std::numeric_limits<double>::infinity();

  bool passed() const { return violations == 0; }

  void observe(double slack) {
    ++samples;
    worst_slack = std::min(worst_slack, slack);
    if (!(slack >= 0.0)) ++violations;
  }
};

struct VerifyOptions {
  bool quick = false;
  std::uint64_t seed = 1;
  /// Mutation test: flips the sign of the calibration term inside the
  /// halfspace oracle's F evaluations. The halfspace check must then fail.
  bool inject_sign_fault = false;

  std::size_t scaled(std::size_t n) const { return quick ? std::max<std::size_t>(n / 10, 1) : n; }
};

namespace detail {

class SignFaultEvaluator {
 public:
  SignFaultEvaluator(const GameConfig& cfg, const HalfspaceParam& theta, double q)
      : cfg_(&cfg), theta_(&theta), q_(q) {}

  FPair operator()(std::size_t i) const {
    const double p = cfg_->grid(i);
    const ScoringRule& rule = cfg_->rule();
    const double bs = theta_->b / cfg_->lambda();
    return {-theta_->a[i] * p + bs * (rule.score_unchecked(p, 0) - rule.score_unchecked(q_, 0)),
            -theta_->a[i] * (p - 1.0) + bs * (rule.score_unchecked(p, 1) - rule.score_unchecked(q_, 1))};
  }

 private:
  const GameConfig* cfg_;
  const HalfspaceParam* theta_;
  double q_;
};

inline HalfspaceParam random_theta(Rng& rng, std::size_t m) {
  HalfspaceParam theta = HalfspaceParam::zeros(m);
  for (auto& a : theta.a) a = 2.0 * rng.uniform() - 1.0;
  theta.b = rng.uniform();
  return theta;
}

inline ScoringRule rule_for(std::size_t k) {
  return k % 2 == 0 ? ScoringRule::brier() : ScoringRule::log_clipped(0.05);
}

/// Smallest max_y of the expected raw regret over distributions on the grid
/// (exact: vertices plus every crossing pair).
inline double minimax_grid_regret(const GameConfig& cfg, double q) {
  const ScoringRule& rule = cfg.rule();
  const std::size_t n = cfg.grid_size();
  std::vector<double> r0(n), r1(n);
  for (std::size_t i = 0; i < n; ++i) {
    r0[i] = rule.regret_term(cfg.grid(i), q, 0);
    r1[i] = rule.regret_term(cfg.grid(i), q, 1);
  }
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) best = std::min(best, std::max(r0[i], r1[i]));
  for (std::size_t i = 0; i < n; ++i) {
    const double di = r0[i] - r1[i];
    if (di < 0.0) continue;
    for (std::size_t j = 0; j < n; ++j) {
      const double dj = r0[j] - r1[j];
      if (dj >= 0.0) continue;
      const double alpha = dj / (dj - di);
      best = std::min(best, alpha * r0[i] + (1.0 - alpha) * r0[j]);
    }
  }
  return best;
}

}  // namespace detail

inline PropertyResult check_halfspace_inequality(const VerifyOptions& opt) {
  PropertyResult res{"halfspace_inequality"};
  Rng rng = Rng::stream(opt.seed, 11);
  const std::size_t n = opt.scaled(100000);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t m = static_cast<std::size_t>(rng.uniform_int(3, 64));
    const GameConfig cfg = GameConfig::relaxed(m, detail::rule_for(k));
    const HalfspaceParam theta = detail::random_theta(rng, m);
    const double q = rng.uniform();
    ForecastDistribution w = ForecastDistribution::point(0);
    try {
      w = opt.inject_sign_fault ? approach_with(m, detail::SignFaultEvaluator(cfg, theta, q))
                                : approach(cfg, theta, q);
    } catch (const std::logic_error&) {
      res.observe(-std::numeric_limits<double>::infinity());
      continue;
    }
    const double bound = cfg.cal_threshold() + cfg.reg_threshold() + 1e-9;
    for (int y = 0; y < 2; ++y) res.observe(bound - payoff_vector(cfg, w, q, y).dot(theta));
  }
  return res;
}

inline PropertyResult check_oracle_cost(const VerifyOptions& opt) {
  PropertyResult res{"oracle_cost"};
  Rng rng = Rng::stream(opt.seed, 12);
  const std::size_t max_m = std::size_t{1} << 16;
  const std::size_t stride = opt.quick ? 10 : 1;
  HalfspaceParam theta = detail::random_theta(rng, max_m);
  for (std::size_t m = 1; m <= max_m; m += stride) {
    const GameConfig cfg = GameConfig::relaxed(m, detail::rule_for(m));
    const std::span<const double> a(theta.a.data(), m + 1);
    std::size_t count = 0;
    (void)approach_with(m, FEvaluator(cfg, a, theta.b, rng.uniform()), &count);
    const double lg = std::ceil(std::log2(static_cast<double>(m)));
    res.observe(2.0 * lg + 4.0 - static_cast<double>(count));
  }
  return res;
}

inline PropertyResult check_distance_identity(const VerifyOptions& opt) {
  PropertyResult res{"distance_dual_identity"};
  Rng rng = Rng::stream(opt.seed, 13);
  const std::size_t n = opt.scaled(10000);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t m = static_cast<std::size_t>(rng.uniform_int(3, 64));
    const GameConfig cfg(m, m < 9 ? ScoringRule::brier() : detail::rule_for(k));
    PayoffVector v = PayoffVector::zeros(m);
    for (auto& c : v.cal) c = 2.0 * rng.uniform() - 1.0;
    const double l1 = v.cal_l1();
    const double target = cfg.cal_threshold() + rng.uniform() * (1.0 - cfg.cal_threshold());
    if (l1 > 0.0) {
      for (auto& c : v.cal) c *= target / l1;
    }
    v.reg = cfg.reg_threshold() + rng.uniform() * (1.0 - cfg.reg_threshold());
    const double dual = -cfg.cal_threshold() - cfg.reg_threshold() - dual_linear_min(v);
    res.observe(1e-12 - std::abs(dist_to_target(cfg, v) - dual));
  }
  return res;
}

inline PropertyResult check_recalibration_identity(const VerifyOptions& opt) {
  PropertyResult res{"recalibration_vector_identity"};
  Rng rng = Rng::stream(opt.seed, 14);
  const std::size_t n = opt.scaled(1000);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t m = static_cast<std::size_t>(rng.uniform_int(1, 40));
    const ScoringRule rule = detail::rule_for(k);
    const std::size_t T = static_cast<std::size_t>(rng.uniform_int(1, 400));
    const double bias = rng.uniform();
    BucketStats stats(m);
    for (std::size_t t = 0; t < T; ++t) {
      const double p = rng.bernoulli(0.5) ? static_cast<double>(rng.uniform_int(0, m)) /
                                                static_cast<double>(m)
                                          : rng.uniform();
      stats.record(p, rng.uniform(), rng.bernoulli(bias), rule);
    }
    const double delta = rng.uniform() * default_delta(rule, m) * 2.0;
    const RecalibrationVector v = stats.recalibration_vector();
    double l1 = 0.0;
    for (double c : v.c) l1 += std::abs(c);
    const double eps = 1.0 / static_cast<double>(m);
    const double expected = std::max({std::max(0.0, l1 - eps / 2.0), v.regret - delta / 2.0, 0.0});
    res.observe(1e-12 - std::abs(stats.recalibration_rate(delta) - expected));
  }
  return res;
}

inline PropertyResult check_mw_dynamic_program(const VerifyOptions& opt) {
  PropertyResult res{"mw_dynamic_program"};
  Rng rng = Rng::stream(opt.seed, 15);
  const std::size_t reps = opt.quick ? 1 : 10;
  for (std::size_t rep = 0; rep < reps; ++rep) {
    for (std::size_t m = 2; m <= 10; ++m) {
      const GameConfig cfg = GameConfig::relaxed(m, detail::rule_for(m + rep));
      MWState state = MWState::init(cfg, 100);
      for (int u = 0; u < 100; ++u) {
        PayoffVector l = PayoffVector::zeros(m);
        for (auto& c : l.cal) c = 2.0 * rng.uniform() - 1.0;
        l.reg = 2.0 * rng.uniform() - 1.0;
        state.update(l);
      }
      PayoffVector probe = PayoffVector::zeros(m);
      for (auto& c : probe.cal) c = 2.0 * rng.uniform() - 1.0;
      probe.reg = 2.0 * rng.uniform() - 1.0;

      // Enumerate every sign pattern of the lifted coordinates.
      const double eta = state.eta();
      const auto cum = state.cumulative_cal();
      double denom = std::exp(eta * state.cumulative_reg());
      double numer = denom * probe.reg;
      for (std::size_t mask = 0; mask < (std::size_t{1} << (m + 1)); ++mask) {
        double z = 0.0, lift = 0.0;
        for (std::size_t k = 0; k <= m; ++k) {
          const double s = (mask >> k) & 1 ? -1.0 : 1.0;
          z += s * cum[k];
          lift += s * probe.cal[k];
        }
        const double e = std::exp(eta * z);
        denom += e;
        numer += e * lift;
      }
      const double rel_denom = std::abs(state.dp_denominator() - denom) / std::abs(denom);
      const double weighted = numer / denom;
      const double rel_loss =
          std::abs(state.dp_weighted_loss(probe) - weighted) / std::max(std::abs(weighted), 1e-300);
      res.observe(1e-9 - rel_denom);
      res.observe(1e-9 - rel_loss);
    }
  }
  return res;
}

inline PropertyResult check_lifted_max(const VerifyOptions& opt) {
  PropertyResult res{"lifted_max_coordinate"};
  Rng rng = Rng::stream(opt.seed, 16);
  const std::size_t n = opt.scaled(10000);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t m = static_cast<std::size_t>(rng.uniform_int(1, 10));
    std::vector<double> cal(m + 1);
    for (auto& c : cal) c = 2.0 * rng.uniform() - 1.0;
    const double reg = 2.0 * rng.uniform() - 1.0;
    double best = reg;
    for (std::size_t mask = 0; mask < (std::size_t{1} << (m + 1)); ++mask) {
      double s = 0.0;
      for (std::size_t i = 0; i <= m; ++i) s += (mask >> i) & 1 ? -cal[i] : cal[i];
      best = std::max(best, s);
    }
    res.observe(1e-12 - std::abs(lifted_max_coordinate(cal, reg) - best));
  }
  return res;
}

/// Some distribution on the grid keeps the expected raw regret within
/// 2 L_s / m^2 for both labels.
inline PropertyResult check_grid_regret(const VerifyOptions& opt) {
  PropertyResult res{"grid_regret_minimax"};
  const std::size_t nq = opt.quick ? 100 : 1000;
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t m = 3; m <= 32; ++m) {
      const GameConfig cfg = GameConfig::relaxed(m, detail::rule_for(r));
      const double bound = 2.0 * cfg.lipschitz() / static_cast<double>(m * m);
      for (std::size_t k = 0; k < nq; ++k) {
        const double q = static_cast<double>(k) / static_cast<double>(nq - 1);
        res.observe(bound + 1e-12 - detail::minimax_grid_regret(cfg, q));
      }
    }
  }
  return res;
}

inline std::vector<PropertyResult> run_all_checks(const VerifyOptions& opt) {
  return {check_halfspace_inequality(opt), check_oracle_cost(opt),   check_distance_identity(opt),
          check_recalibration_identity(opt), check_mw_dynamic_program(opt), check_lifted_max(opt),
          check_grid_regret(opt)};
}

}  // namespace recal
