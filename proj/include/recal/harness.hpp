#pragma once

// Simulation harness: label streams, black-box oracles, forecasters and the
// round protocol
//
//   1. nature draws y_t (hidden; skipped for the adaptive adversary)
//   2. the oracle reveals q_t
//   3. the forecaster commits to p_t
//   4. y_t is revealed (the adaptive adversary picks it now, seeing w_t)
//   5. the forecaster observes y_t and metrics are recorded.
//
// The clairvoyant oracle reads the hidden y_t in step 2; forecasters never do.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "recal/errors.hpp"
#include "recal/geometry.hpp"
#include "recal/metrics.hpp"
#include "recal/mw_recalibrator.hpp"
#include "recal/recalibrator.hpp"
#include "recal/rng.hpp"
#include "recal/scoring.hpp"

namespace recal {

namespace detail {

inline double parse_number(std::string_view text, std::string_view what) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ConfigError("bad number '" + std::string(text) + "' in " + std::string(what));
  }
  return v;
}

inline std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

/// Splits "name:args" into (name, args); args empty when there is no colon.
inline std::pair<std::string_view, std::string_view> split_spec(std::string_view spec) {
  const auto colon = spec.find(':');
  if (colon == std::string_view::npos) return {spec, {}};
  return {spec.substr(0, colon), spec.substr(colon + 1)};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Label streams

struct BernoulliLabels {
  double pi;
};
struct PeriodicLabels {
  std::vector<int> pattern;
};
struct AdversarialLabels {};

using LabelSpec = std::variant<BernoulliLabels, PeriodicLabels, AdversarialLabels>;

/// "bernoulli:<pi>", "periodic:<y0>,<y1>,..." or "adversarial".
inline LabelSpec parse_label_spec(std::string_view spec) {
  const auto [name, args] = detail::split_spec(spec);
  if (name == "bernoulli") {
    const double pi = detail::parse_number(args, "bernoulli label spec");
    if (!(pi >= 0.0 && pi <= 1.0)) throw ConfigError("bernoulli probability must lie in [0,1]");
    return BernoulliLabels{pi};
  }
  if (name == "periodic") {
    PeriodicLabels out;
    std::string_view rest = args;
    while (!args.empty()) {
      const auto comma = rest.find(',');
      const std::string_view tok = rest.substr(0, comma);
      if (tok == "0") {
        out.pattern.push_back(0);
      } else if (tok == "1") {
        out.pattern.push_back(1);
      } else {
        throw ConfigError("periodic pattern entries must be 0 or 1, got '" + std::string(tok) + "'");
      }
      if (comma == std::string_view::npos) break;
      rest = rest.substr(comma + 1);
    }
    if (out.pattern.empty()) throw ConfigError("periodic pattern must be nonempty");
    return out;
  }
  if (name == "adversarial" && args.empty()) return AdversarialLabels{};
  throw ConfigError("unknown label spec '" + std::string(spec) +
                    "' (expected bernoulli:<pi>, periodic:<pattern> or adversarial)");
}

class LabelSource {
 public:
  LabelSource(LabelSpec spec, std::uint64_t seed) : spec_(std::move(spec)), rng_(Rng::stream(seed, 2)) {}

  /// True when labels are chosen by the adversary after seeing the forecast.
  bool adaptive() const { return std::holds_alternative<AdversarialLabels>(spec_); }

  /// P(y_t = 1) for stochastic streams (t is 1-based).
  std::optional<double> truth(std::size_t t) const {
    if (const auto* b = std::get_if<BernoulliLabels>(&spec_)) return b->pi;
    if (const auto* p = std::get_if<PeriodicLabels>(&spec_)) {
      return static_cast<double>(p->pattern[(t - 1) % p->pattern.size()]);
    }
    return std::nullopt;
  }

  /// Nature's label for round t; not defined for the adaptive stream.
  int draw(std::size_t t) {
    if (const auto* b = std::get_if<BernoulliLabels>(&spec_)) return rng_.bernoulli(b->pi);
    if (const auto* p = std::get_if<PeriodicLabels>(&spec_)) return p->pattern[(t - 1) % p->pattern.size()];
    throw ProtocolError("adversarial labels are chosen by adversary_label, not drawn");
  }

 private:
  LabelSpec spec_;
  Rng rng_;
};

inline LabelSource make_label_stream(const LabelSpec& spec, std::uint64_t seed) { return LabelSource(spec, seed); }

// ---------------------------------------------------------------------------
// Oracles

struct TruthOracle {};
struct ClairvoyantOracle {
  double beta;
};
struct ConstantOracle {
  double c;
};
struct NoisyTruthOracle {
  double sigma;
};

using OracleSpec = std::variant<TruthOracle, ClairvoyantOracle, ConstantOracle, NoisyTruthOracle>;

/// "truth", "clairvoyant:<beta>", "constant:<c>" or "noisy:<sigma>".
inline OracleSpec parse_oracle_spec(std::string_view spec) {
  const auto [name, args] = detail::split_spec(spec);
  if (name == "truth" && args.empty()) return TruthOracle{};
  if (name == "clairvoyant") {
    const double beta = detail::parse_number(args, "clairvoyant oracle spec");
    if (!(beta >= 0.0 && beta < 0.5)) throw ConfigError("clairvoyant shrink beta must lie in [0, 0.5)");
    return ClairvoyantOracle{beta};
  }
  if (name == "constant") {
    const double c = detail::parse_number(args, "constant oracle spec");
    if (!(c >= 0.0 && c <= 1.0)) throw ConfigError("constant oracle value must lie in [0,1]");
    return ConstantOracle{c};
  }
  if (name == "noisy") {
    const double sigma = detail::parse_number(args, "noisy oracle spec");
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ConfigError("noisy oracle sigma must be >= 0");
    return NoisyTruthOracle{sigma};
  }
  throw ConfigError("unknown oracle spec '" + std::string(spec) +
                    "' (expected truth, clairvoyant:<beta>, constant:<c> or noisy:<sigma>)");
}

class OracleSource {
 public:
  OracleSource(OracleSpec spec, std::uint64_t seed) : spec_(std::move(spec)), rng_(Rng::stream(seed, 3)) {}

  bool needs_truth() const {
    return std::holds_alternative<TruthOracle>(spec_) || std::holds_alternative<NoisyTruthOracle>(spec_);
  }
  bool needs_label() const { return std::holds_alternative<ClairvoyantOracle>(spec_); }

  double forecast(std::optional<double> truth, std::optional<int> label) {
    return std::visit(
        [&](const auto& o) -> double {
          using O = std::decay_t<decltype(o)>;
          if constexpr (std::is_same_v<O, TruthOracle>) {
            return truth.value();
          } else if constexpr (std::is_same_v<O, ClairvoyantOracle>) {
            return (1.0 - 2.0 * o.beta) * static_cast<double>(label.value()) + o.beta;
          } else if constexpr (std::is_same_v<O, ConstantOracle>) {
            return o.c;
          } else {
            return std::clamp(truth.value() + o.sigma * rng_.normal(), 0.0, 1.0);
          }
        },
        spec_);
  }

 private:
  OracleSpec spec_;
  Rng rng_;
};

inline OracleSource make_oracle(const OracleSpec& spec, std::uint64_t seed) { return OracleSource(spec, seed); }

// ---------------------------------------------------------------------------
// Forecasters

enum class ForecasterKind { approach, mw, passthrough };

inline std::string_view to_string(ForecasterKind k) {
  switch (k) {
    case ForecasterKind::approach: return "approach";
    case ForecasterKind::mw: return "mw";
    case ForecasterKind::passthrough: return "passthrough";
  }
  return "?";
}

inline ForecasterKind parse_forecaster(std::string_view name) {
  if (name == "approach") return ForecasterKind::approach;
  if (name == "mw") return ForecasterKind::mw;
  if (name == "passthrough") return ForecasterKind::passthrough;
  throw ConfigError("unknown forecaster '" + std::string(name) + "' (expected approach, mw or passthrough)");
}

class Forecaster {
 public:
  virtual ~Forecaster() = default;
  virtual Prediction predict(double q) = 0;
  virtual void observe(double q, int y) = 0;
  /// Halfspace-oracle F evaluations so far (approach forecaster only).
  virtual std::size_t f_evaluations() const { return 0; }
};

class ApproachForecaster final : public Forecaster {
 public:
  ApproachForecaster(const GameConfig& cfg, std::uint64_t seed) : impl_(cfg, seed) {}
  Prediction predict(double q) override { return impl_.predict(q); }
  void observe(double q, int y) override { impl_.observe(q, y); }
  std::size_t f_evaluations() const override { return impl_.f_evaluations(); }
  const Recalibrator& impl() const { return impl_; }

 private:
  Recalibrator impl_;
};

class MWForecaster final : public Forecaster {
 public:
  MWForecaster(const GameConfig& cfg, std::size_t horizon, std::uint64_t seed) : impl_(cfg, horizon, seed) {}
  Prediction predict(double q) override { return impl_.predict(q); }
  void observe(double q, int y) override { impl_.observe(q, y); }
  const MWRecalibrator& impl() const { return impl_; }

 private:
  MWRecalibrator impl_;
};

/// Forwards the oracle, rounded to the grid.
class PassthroughForecaster final : public Forecaster {
 public:
  explicit PassthroughForecaster(const GameConfig& cfg) : cfg_(cfg) {}
  Prediction predict(double q) override {
    check_probability(q, "oracle forecast");
    const std::size_t i = cfg_.nearest_index(q);
    return {cfg_.grid(i), i, ForecastDistribution::point(i)};
  }
  void observe(double, int y) override { check_label(y); }

 private:
  GameConfig cfg_;
};

// ---------------------------------------------------------------------------
// Adversary

/// Greedy label: the y in {0,1} that maximizes dist_to_target of the running
/// average payoff after this round; ties go to y = 1. rounds_done = t - 1.
inline int adversary_label(const GameConfig& cfg, const ForecastDistribution& w, double q,
                           const PayoffVector& cum_payoff, std::size_t rounds_done) {
  const double inv = 1.0 / static_cast<double>(rounds_done + 1);
  double dist[2];
  for (int y = 0; y < 2; ++y) {
    PayoffVector next = cum_payoff;
    accumulate_payoff(cfg, next, w, q, y);
    dist[y] = dist_to_target(cfg, next.scaled(inv));
  }
  return dist[1] >= dist[0] ? 1 : 0;
}

// ---------------------------------------------------------------------------
// Experiments

/// m = ceil(T^(1 - 2x)), robust to pow() landing just above an integer.
inline std::size_t resolution_for_exponent(std::size_t T, double x) {
  const double v = std::pow(static_cast<double>(T), 1.0 - 2.0 * x);
  const double r = std::round(v);
  const double m = std::abs(v - r) <= 1e-9 * std::max(1.0, r) ? r : std::ceil(v);
  return static_cast<std::size_t>(std::max(1.0, m));
}

/// Accepted tradeoff exponents: [1/3, 2/5], with slack for truncated decimals like 0.3333.
inline constexpr double kExponentLo = 1.0 / 3.0;
inline constexpr double kExponentHi = 2.0 / 5.0;
inline constexpr double kExponentSlack = 1e-4;

struct ExperimentConfig {
  ForecasterKind forecaster = ForecasterKind::approach;
  std::string rule = "brier";
  std::optional<std::size_t> m;
  std::optional<double> exponent;
  std::size_t T = 4096;
  std::string oracle = "clairvoyant:0.2";
  std::string labels = "bernoulli:0.5";
  std::uint64_t seed = 0;
};

/// A validated configuration, ready to run.
struct ResolvedExperiment {
  ExperimentConfig config;
  GameConfig game;
  LabelSpec labels;
  OracleSpec oracle;
};

inline ResolvedExperiment resolve(const ExperimentConfig& cfg) {
  const ScoringRule rule = ScoringRule::parse(cfg.rule);
  if (cfg.T < 1) throw ConfigError("T must be positive");
  if (cfg.m.has_value() == cfg.exponent.has_value()) {
    throw ConfigError("exactly one of m and exponent must be given");
  }
  std::size_t m = 0;
  if (cfg.exponent) {
    const double x = *cfg.exponent;
    if (!(x >= kExponentLo - kExponentSlack && x <= kExponentHi + kExponentSlack)) {
      throw ConfigError("exponent must lie in [1/3, 2/5], got " + detail::format_number(x));
    }
    m = resolution_for_exponent(cfg.T, x);
  } else {
    m = *cfg.m;
  }
  GameConfig game(m, rule);
  LabelSpec labels = parse_label_spec(cfg.labels);
  OracleSpec oracle = parse_oracle_spec(cfg.oracle);

  const bool adaptive = std::holds_alternative<AdversarialLabels>(labels);
  if (adaptive && (std::holds_alternative<TruthOracle>(oracle) || std::holds_alternative<NoisyTruthOracle>(oracle))) {
    throw ConfigError("truth-based oracles need a stochastic label stream, not adversarial");
  }
  if (adaptive && std::holds_alternative<ClairvoyantOracle>(oracle)) {
    throw ConfigError("the clairvoyant oracle cannot see labels the adversary has not chosen yet");
  }
  if (cfg.forecaster == ForecasterKind::mw) {
    (void)MWState::init(game, cfg.T);  // throws on T < ln d
  }
  return {cfg, game, std::move(labels), std::move(oracle)};
}

struct RoundRecord {
  std::size_t t;
  double q;
  double p;
  int y;
};

struct Checkpoint {
  std::size_t t;
  double calibration;
  double regret;
  double recalibration;
  double distance;
};

struct Trace {
  ExperimentConfig config;
  std::size_t m = 0;
  std::vector<RoundRecord> rounds;
  std::vector<Checkpoint> checkpoints;
  BucketStats stats{1};
  /// Cumulative expected payoff, regret coordinate divided by lambda.
  PayoffVector cum_payoff;
  double lambda = 1.0;
  std::size_t f_evaluations = 0;

  double final_distance(const GameConfig& game) const {
    return dist_to_target(game, cum_payoff.scaled(1.0 / static_cast<double>(stats.rounds())));
  }

  /// max(||avg cal||_1, avg unscaled regret) of the expected payoffs.
  double lifted_max() const {
    const double inv = 1.0 / static_cast<double>(stats.rounds());
    return lifted_max_coordinate(cum_payoff.scaled(inv).cal, cum_payoff.reg * lambda * inv);
  }
};

struct RunOptions {
  bool keep_rounds = true;
};

inline bool is_checkpoint(std::size_t t, std::size_t T) { return t == T || (t & (t - 1)) == 0; }

inline std::unique_ptr<Forecaster> make_forecaster(const ResolvedExperiment& ex) {
  const std::uint64_t seed = Rng::stream(ex.config.seed, 1).next_u64();
  switch (ex.config.forecaster) {
    case ForecasterKind::approach: return std::make_unique<ApproachForecaster>(ex.game, seed);
    case ForecasterKind::mw: return std::make_unique<MWForecaster>(ex.game, ex.config.T, seed);
    case ForecasterKind::passthrough: return std::make_unique<PassthroughForecaster>(ex.game);
  }
  throw ConfigError("unknown forecaster");
}

inline Trace run_experiment(const ResolvedExperiment& ex, RunOptions opts = {}) {
  const GameConfig& game = ex.game;
  const ScoringRule& rule = game.rule();
  const std::size_t T = ex.config.T;
  const double delta = default_delta(rule, game.m());

  auto forecaster = make_forecaster(ex);
  LabelSource labels = make_label_stream(ex.labels, ex.config.seed);
  OracleSource oracle = make_oracle(ex.oracle, ex.config.seed);

  Trace trace;
  trace.config = ex.config;
  trace.m = game.m();
  trace.stats = BucketStats(game.m());
  trace.cum_payoff = PayoffVector::zeros(game.m());
  trace.lambda = game.lambda();
  if (opts.keep_rounds) trace.rounds.reserve(T);

  for (std::size_t t = 1; t <= T; ++t) {
    const std::optional<int> hidden = labels.adaptive() ? std::nullopt : std::optional<int>(labels.draw(t));
    const double q = oracle.forecast(labels.truth(t), hidden);
    const Prediction pred = forecaster->predict(q);
    const int y = hidden ? *hidden : adversary_label(game, pred.w, q, trace.cum_payoff, t - 1);
    forecaster->observe(q, y);

    trace.stats.record(pred.p, q, y, rule);
    accumulate_payoff(game, trace.cum_payoff, pred.w, q, y);
    if (opts.keep_rounds) trace.rounds.push_back({t, q, pred.p, y});
    if (is_checkpoint(t, T)) {
      trace.checkpoints.push_back({t, trace.stats.calibration_rate(), trace.stats.average_regret(),
                                   trace.stats.recalibration_rate(delta),
                                   dist_to_target(game, trace.cum_payoff.scaled(1.0 / static_cast<double>(t)))});
    }
  }
  trace.f_evaluations = forecaster->f_evaluations();
  return trace;
}

inline Trace run_experiment(const ExperimentConfig& cfg, RunOptions opts = {}) {
  return run_experiment(resolve(cfg), opts);
}

}  // namespace recal
