#pragma once

// Online recalibration by approachability: a halfspace oracle that turns a
// point of K into a forecast distribution, driven by online gradient
// descent over K.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>

#include "recal/distribution.hpp"
#include "recal/errors.hpp"
#include "recal/geometry.hpp"
#include "recal/rng.hpp"
#include "recal/scoring.hpp"

namespace recal {

/// F_i = (f(i,0), f(i,1)).
struct FPair {
  double y0;
  double y1;

  /// Closed third quadrant.
  bool in_third_quadrant() const { return y0 <= 0.0 && y1 <= 0.0; }
  double slope_sign() const { return y1 - y0; }
  double max() const { return std::max(y0, y1); }
};

/// Evaluates f(i,y) = a_i (i/m - y) + (b/lambda) (S(i/m,y) - S(q,y)) for a fixed (theta, q).
class FEvaluator {
 public:
  FEvaluator(const GameConfig& cfg, std::span<const double> a, double b, double q)
      : cfg_(&cfg), a_(a), b_scaled_(b / cfg.lambda()) {
    if (a.size() != cfg.grid_size()) throw std::invalid_argument("halfspace has wrong dimension");
    check_probability(q, "oracle forecast");
    oracle0_ = cfg.rule().score_unchecked(q, 0);
    oracle1_ = cfg.rule().score_unchecked(q, 1);
  }

  FPair operator()(std::size_t i) const {
    if (i > cfg_->m()) throw std::out_of_range("grid index " + std::to_string(i) + " outside 0.." +
                                               std::to_string(cfg_->m()));
    const double p = cfg_->grid(i);
    const ScoringRule& rule = cfg_->rule();
    return {a_[i] * p + b_scaled_ * (rule.score_unchecked(p, 0) - oracle0_),
            a_[i] * (p - 1.0) + b_scaled_ * (rule.score_unchecked(p, 1) - oracle1_)};
  }

 private:
  const GameConfig* cfg_;
  std::span<const double> a_;
  double b_scaled_;
  double oracle0_ = 0.0;
  double oracle1_ = 0.0;
};

inline double f_value(const GameConfig& cfg, const HalfspaceParam& theta, double q, std::size_t i, int y) {
  check_label(y);
  const FPair F = FEvaluator(cfg, theta.a, theta.b, q)(i);
  return y == 0 ? F.y0 : F.y1;
}

/// The halfspace oracle over grid {0..m} for an arbitrary F evaluator.
///
/// Returns a point mass on an index whose F lies in the closed third quadrant,
/// or a two-point mixture on consecutive indices (lo, lo+1) whose mixed F
/// lies on the diagonal f(.,0) = f(.,1). Evaluates F at most
/// ceil(log2 m) + 2 times; the count is added to *evaluations when given.
template <class Eval>
ForecastDistribution approach_with(std::size_t m, const Eval& F, std::size_t* evaluations = nullptr) {
  std::size_t count = 0;
  auto eval = [&](std::size_t i) {
    ++count;
    return F(i);
  };
  auto finish = [&](ForecastDistribution d) {
    if (evaluations) *evaluations += count;
    return d;
  };

  const FPair first = eval(0);
  if (first.in_third_quadrant()) return finish(ForecastDistribution::point(0));
  const FPair last = eval(m);
  if (last.in_third_quadrant()) return finish(ForecastDistribution::point(m));

  // Propriety and b >= 0 put F_0 in the left half-plane and F_m in the lower one.
  if (!(first.y0 <= 0.0) || !(last.y1 <= 0.0)) {
    throw std::logic_error("halfspace oracle endpoint invariant violated: f(0,0)=" + std::to_string(first.y0) +
                           " f(m,1)=" + std::to_string(last.y1));
  }

  // Invariant: slope_sign(lo) >= 0 > slope_sign(hi).
  std::size_t lo = 0, hi = m;
  FPair f_lo = first, f_hi = last;
  while (hi - lo > 1) {
    const std::size_t mid = lo + (hi - lo) / 2;
    const FPair f_mid = eval(mid);
    if (f_mid.slope_sign() >= 0.0) {
      lo = mid;
      f_lo = f_mid;
    } else {
      hi = mid;
      f_hi = f_mid;
    }
  }

  if (f_lo.in_third_quadrant()) return finish(ForecastDistribution::point(lo));
  if (f_hi.in_third_quadrant()) return finish(ForecastDistribution::point(hi));

  const double delta = f_lo.y0 - f_hi.y0 - f_lo.y1 + f_hi.y1;
  if (std::abs(delta) < 1e-12) {
    return finish(ForecastDistribution::point(f_lo.max() <= f_hi.max() ? lo : hi));
  }
  const double w_lo = std::clamp((f_hi.y1 - f_hi.y0) / delta, 0.0, 1.0);
  return finish(ForecastDistribution::mixture(lo, w_lo, hi, 1.0 - w_lo));
}

/// Halfspace oracle for theta in K. For theta = 0 every distribution is
/// valid and the nearest grid point to q is returned.
inline ForecastDistribution approach(const GameConfig& cfg, const HalfspaceParam& theta, double q,
                                     std::size_t* evaluations = nullptr) {
  check_probability(q, "oracle forecast");
  if (theta.is_zero()) return ForecastDistribution::point(cfg.nearest_index(q));
  return approach_with(cfg.m(), FEvaluator(cfg, theta.a, theta.b, q), evaluations);
}

/// eta_t = D / (G sqrt(t)).
inline double ogd_learning_rate(std::size_t m, std::size_t t) {
  return k_diameter(m) / (payoff_norm_bound() * std::sqrt(static_cast<double>(t)));
}

/// One projected ascent step on the payoff (descent on its negation).
inline HalfspaceParam ogd_step(const HalfspaceParam& theta, const PayoffVector& payoff, double eta) {
  if (payoff.cal.size() != theta.a.size()) throw std::invalid_argument("payoff/halfspace dimension mismatch");
  std::vector<double> raw(theta.a.size() + 1);
  for (std::size_t i = 0; i < theta.a.size(); ++i) raw[i] = theta.a[i] + eta * payoff.cal[i];
  raw.back() = theta.b + eta * payoff.reg;
  return project_onto_K(raw);
}

struct Prediction {
  double p;
  std::size_t index;
  ForecastDistribution w;
};

/// Algorithm state: theta_t, the cumulative expected payoff and the sampling stream.
///
/// predict and observe must strictly alternate. The approachability ledger
/// uses the expected payoff of w_t, not the sampled index.
class Recalibrator {
 public:
  Recalibrator(GameConfig cfg, std::uint64_t seed)
      : cfg_(std::move(cfg)),
        theta_(HalfspaceParam::zeros(cfg_.m())),
        cum_payoff_(PayoffVector::zeros(cfg_.m())),
        rng_(seed) {}

  Prediction predict(double q) {
    if (pending_) throw ProtocolError("predict called twice without observe");
    const ForecastDistribution w = approach(cfg_, theta_, q, &f_evaluations_);
    const std::size_t i = w.sample(rng_.uniform());
    pending_ = Pending{q, w};
    return {cfg_.grid(i), i, w};
  }

  void observe(double q, int y) {
    if (!pending_) throw ProtocolError("observe called without a pending prediction");
    if (pending_->q != q) throw ProtocolError("observe q does not match the pending prediction");
    check_label(y);
    const ForecastDistribution w = pending_->w;
    pending_.reset();
    ++t_;

    // The payoff is zero outside supp(w) in the calibration block, so only
    // those coordinates of theta move; clamping them is the exact projection.
    const ScoringRule& rule = cfg_.rule();
    const double yd = static_cast<double>(y);
    const double oracle_score = rule.score_unchecked(q, y);
    const double eta = ogd_learning_rate(cfg_.m(), t_);
    double reg = 0.0;
    for (const auto& atom : w.support()) {
      const double p = cfg_.grid(atom.index);
      const double c = atom.weight * (p - yd);
      cum_payoff_.cal[atom.index] += c;
      theta_.a[atom.index] = std::clamp(theta_.a[atom.index] + eta * c, -1.0, 1.0);
      reg += atom.weight * (rule.score_unchecked(p, y) - oracle_score);
    }
    reg /= cfg_.lambda();
    cum_payoff_.reg += reg;
    theta_.b = std::clamp(theta_.b + eta * reg, 0.0, 1.0);
  }

  const GameConfig& config() const { return cfg_; }
  const HalfspaceParam& theta() const { return theta_; }
  const PayoffVector& cum_payoff() const { return cum_payoff_; }
  std::size_t rounds() const { return t_; }
  bool has_pending() const { return pending_.has_value(); }
  /// Total F evaluations spent in the halfspace oracle so far.
  std::size_t f_evaluations() const { return f_evaluations_; }

  /// dist_to_target of the average expected payoff.
  double distance() const {
    if (t_ == 0) return 0.0;
    return dist_to_target(cfg_, cum_payoff_.scaled(1.0 / static_cast<double>(t_)));
  }

 private:
  struct Pending {
    double q;
    ForecastDistribution w;
  };

  GameConfig cfg_;
  HalfspaceParam theta_;
  PayoffVector cum_payoff_;
  Rng rng_;
  std::optional<Pending> pending_;
  std::size_t t_ = 0;
  std::size_t f_evaluations_ = 0;
};

}  // namespace recal
