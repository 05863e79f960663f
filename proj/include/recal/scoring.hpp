#pragma once

// Binary proper scoring rules, used as losses: lower is better.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <string>
#include <string_view>

#include "recal/errors.hpp"

namespace recal {

enum class RuleKind { brier, log_clipped };

class ScoringRule {
 public:
  static ScoringRule brier() { return ScoringRule(RuleKind::brier, 0.0); }

  /// Log loss evaluated at p clamped to [gamma, 1 - gamma]; gamma in (0, 1/2).
  static ScoringRule log_clipped(double gamma) {
    if (!(gamma > 0.0 && gamma < 0.5)) {
      throw ConfigError("log clip gamma must lie in (0, 0.5), got " + std::to_string(gamma));
    }
    return ScoringRule(RuleKind::log_clipped, gamma);
  }

  /// Parses "brier" or "log:<gamma>".
  static ScoringRule parse(std::string_view spec) {
    if (spec == "brier") return brier();
    if (spec.substr(0, 4) == "log:") {
      const std::string_view num = spec.substr(4);
      double gamma = 0.0;
      const auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), gamma);
      if (ec != std::errc{} || ptr != num.data() + num.size()) {
        throw ConfigError("bad log clip value in rule '" + std::string(spec) + "'");
      }
      return log_clipped(gamma);
    }
    throw ConfigError("unknown scoring rule '" + std::string(spec) + "' (expected brier or log:<gamma>)");
  }

  RuleKind kind() const { return kind_; }
  double clip_gamma() const { return gamma_; }
  double lipschitz() const { return lipschitz_; }

  std::string spec() const {
    if (kind_ == RuleKind::brier) return "brier";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, gamma_);
    return "log:" + std::string(buf, res.ptr);
  }

  double score(double p, int y) const {
    check_probability(p, "forecast");
    check_label(y);
    return score_unchecked(p, y);
  }

  /// S(p, q): expected loss of reporting p when the outcome is Bernoulli(q).
  double extended_score(double p, double q) const {
    check_probability(p, "forecast");
    check_probability(q, "outcome probability");
    return (1.0 - q) * score_unchecked(p, 0) + q * score_unchecked(p, 1);
  }

  /// S(p, y) - S(q, y); negative when p beats the reference forecast q.
  double regret_term(double p, double q, int y) const { return score(p, y) - score(q, y); }

  /// Hot-path evaluation; caller guarantees p in [0,1] and y in {0,1}.
  double score_unchecked(double p, int y) const {
    if (kind_ == RuleKind::brier) {
      const double d = p - static_cast<double>(y);
      return d * d;
    }
    const double pc = std::clamp(p, gamma_, 1.0 - gamma_);
    return y == 1 ? -std::log(pc) : -std::log1p(-pc);
  }

  friend bool operator==(const ScoringRule& a, const ScoringRule& b) {
    return a.kind_ == b.kind_ && a.gamma_ == b.gamma_;
  }

 private:
  ScoringRule(RuleKind kind, double gamma)
      : kind_(kind), gamma_(gamma), lipschitz_(kind == RuleKind::brier ? 2.0 : 1.0 / gamma) {}

  RuleKind kind_;
  double gamma_;
  double lipschitz_;
};

inline double lipschitz_constant(const ScoringRule& rule) { return rule.lipschitz(); }

}  // namespace recal
