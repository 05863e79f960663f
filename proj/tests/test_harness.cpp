#include <gtest/gtest.h>

#include <cmath>
#include <string>
#include <vector>

#include "recal/harness.hpp"
#include "recal/sweep.hpp"
#include "support/oracles.hpp"

using namespace recal;

namespace {

ExperimentConfig config(std::size_t m, std::size_t T, std::string oracle, std::string labels, std::uint64_t seed = 1) {
  ExperimentConfig c;
  c.m = m;
  c.T = T;
  c.oracle = std::move(oracle);
  c.labels = std::move(labels);
  c.seed = seed;
  return c;
}

/// dist_to_target of (cum + payoff) / n, straight from the definitions.
double reference_distance(double gamma, std::size_t m, std::vector<double> cal, double reg, const std::vector<double>& w,
                          double q, int y, double n) {
  const auto p = oracle::payoff(gamma, m, w, q, y);
  double l1 = 0.0;
  for (std::size_t i = 0; i <= m; ++i) l1 += std::abs((cal[i] + p.cal[i]) / n);
  const double L = oracle::lipschitz(gamma), lambda = std::max(1.0, L);
  const double md = static_cast<double>(m);
  return std::max(0.0, l1 - 1.0 / md) + std::max(0.0, (reg + p.reg) / n - 4.0 * L / (lambda * md * md));
}

}  // namespace

TEST(LabelStream, Parsing) {
  EXPECT_DOUBLE_EQ(std::get<BernoulliLabels>(parse_label_spec("bernoulli:0.3")).pi, 0.3);
  EXPECT_EQ(std::get<PeriodicLabels>(parse_label_spec("periodic:0,1,1")).pattern, (std::vector<int>{0, 1, 1}));
  EXPECT_TRUE(std::holds_alternative<AdversarialLabels>(parse_label_spec("adversarial")));
  for (const char* bad : {"bernoulli:1.5", "bernoulli:", "bernoulli:x", "periodic:", "periodic:0,2", "periodic:0,,1", "periodic:0,1,",
                          "adversarial:1", "coin", ""}) {
    EXPECT_THROW(parse_label_spec(bad), ConfigError) << bad;
  }
}

TEST(LabelStream, Examples) {
  auto zeros = make_label_stream(BernoulliLabels{0.0}, 3);
  for (std::size_t t = 1; t <= 1000; ++t) EXPECT_EQ(zeros.draw(t), 0);

  auto rain = make_label_stream(PeriodicLabels{{0, 1}}, 3);
  for (std::size_t t = 1; t <= 10; ++t) {
    EXPECT_EQ(rain.draw(t), t % 2 == 0 ? 1 : 0);
    EXPECT_DOUBLE_EQ(*rain.truth(t), t % 2 == 0 ? 1.0 : 0.0);
  }

  auto a = make_label_stream(BernoulliLabels{0.5}, 9), b = make_label_stream(BernoulliLabels{0.5}, 9);
  int ones = 0;
  for (std::size_t t = 1; t <= 2000; ++t) {
    const int y = a.draw(t);
    EXPECT_EQ(y, b.draw(t));
    ones += y;
  }
  EXPECT_GT(ones, 850);
  EXPECT_LT(ones, 1150);

  auto adv = make_label_stream(AdversarialLabels{}, 1);
  EXPECT_TRUE(adv.adaptive());
  EXPECT_FALSE(adv.truth(1).has_value());
  EXPECT_THROW(adv.draw(1), ProtocolError);
}

TEST(Oracle, Examples) {
  auto shrunk = make_oracle(parse_oracle_spec("clairvoyant:0.2"), 1);
  EXPECT_NEAR(shrunk.forecast(std::nullopt, 1), 0.8, 1e-15);
  EXPECT_NEAR(shrunk.forecast(std::nullopt, 0), 0.2, 1e-15);

  auto perfect = make_oracle(ClairvoyantOracle{0.0}, 1);
  EXPECT_DOUBLE_EQ(perfect.forecast(std::nullopt, 1), 1.0);
  EXPECT_DOUBLE_EQ(perfect.forecast(std::nullopt, 0), 0.0);

  auto half = make_oracle(parse_oracle_spec("constant:0.5"), 1);
  EXPECT_DOUBLE_EQ(half.forecast(std::nullopt, std::nullopt), 0.5);

  auto truth = make_oracle(parse_oracle_spec("truth"), 1);
  EXPECT_DOUBLE_EQ(truth.forecast(0.37, std::nullopt), 0.37);

  auto exact = make_oracle(NoisyTruthOracle{0.0}, 1);
  EXPECT_DOUBLE_EQ(exact.forecast(0.37, 1), 0.37);
  auto noisy = make_oracle(NoisyTruthOracle{5.0}, 1);
  for (int k = 0; k < 100; ++k) {
    const double q = noisy.forecast(0.5, std::nullopt);
    EXPECT_GE(q, 0.0);
    EXPECT_LE(q, 1.0);
  }
  for (const char* bad : {"clairvoyant:0.5", "clairvoyant:-0.1", "constant:1.1", "noisy:-1", "noisy:inf", "truth:1",
                          "oracle"}) {
    EXPECT_THROW(parse_oracle_spec(bad), ConfigError) << bad;
  }
}

TEST(Adversary, Examples) {
  const GameConfig g(8, ScoringRule::brier());
  const PayoffVector zero = PayoffVector::zeros(8);
  EXPECT_EQ(adversary_label(g, ForecastDistribution::point(0), 0.0, zero, 0), 1);
  EXPECT_EQ(adversary_label(g, ForecastDistribution::point(8), 1.0, zero, 0), 0);
  // Symmetric: the midpoint forecast against a 0.5 oracle moves the payoff equally either way.
  EXPECT_EQ(adversary_label(g, ForecastDistribution::point(4), 0.5, zero, 0), 1);
}

TEST(Adversary, MatchesReferenceArgmax) {
  oracle::Gen gen(51);
  for (int k = 0; k < 3000; ++k) {
    const std::size_t m = gen.index(3, 12);
    const double gamma = k % 2 ? 0.0 : 0.1;
    const GameConfig g =
        GameConfig::relaxed(m, gamma == 0.0 ? ScoringRule::brier() : ScoringRule::log_clipped(gamma));
    PayoffVector cum = PayoffVector::zeros(m);
    const std::size_t rounds = gen.index(0, 50);
    for (auto& c : cum.cal) c = gen.range(-0.3, 0.3) * static_cast<double>(rounds);
    cum.reg = gen.range(-0.5, 0.5) * static_cast<double>(rounds);
    const std::size_t i = gen.index(0, m - 1);
    const double a = gen.unit();
    const auto w = ForecastDistribution::mixture(i, a, i + 1, 1.0 - a);
    const double q = gen.unit();
    const auto dense = w.dense(m);
    const double n = static_cast<double>(rounds + 1);
    const double d0 = reference_distance(gamma, m, cum.cal, cum.reg, dense, q, 0, n);
    const double d1 = reference_distance(gamma, m, cum.cal, cum.reg, dense, q, 1, n);
    if (std::abs(d0 - d1) < 1e-12) continue;
    EXPECT_EQ(adversary_label(g, w, q, cum, rounds), d1 > d0 ? 1 : 0);
  }
}

TEST(Resolve, ExponentResolution) {
  EXPECT_EQ(resolution_for_exponent(4096, 1.0 / 3.0), 16u);
  EXPECT_EQ(resolution_for_exponent(1024, 1.0 / 3.0), 11u);
  EXPECT_EQ(resolution_for_exponent(4096, 2.0 / 5.0), 6u);
  EXPECT_EQ(resolution_for_exponent(1 << 15, 2.0 / 5.0), 8u);
  for (std::size_t T : {1024u, 4096u, 1u << 17}) {
    const double v = std::pow(static_cast<double>(T), 1.0 / 3.0);
    EXPECT_GE(static_cast<double>(resolution_for_exponent(T, 1.0 / 3.0)), v - 1e-9);
    EXPECT_LT(static_cast<double>(resolution_for_exponent(T, 1.0 / 3.0)), v + 1.0);
  }

  ExperimentConfig c = config(8, 4096, "clairvoyant:0.2", "bernoulli:0.5");
  c.m.reset();
  c.exponent = 1.0 / 3.0;
  EXPECT_EQ(resolve(c).game.m(), 16u);
  c.exponent = 0.3333;  // 4096^0.3334 is just above 16
  EXPECT_EQ(resolve(c).game.m(), 17u);
  c.exponent = 0.5;
  EXPECT_THROW(resolve(c), ConfigError);
  c.exponent = 0.3;
  EXPECT_THROW(resolve(c), ConfigError);
}

TEST(Resolve, ConfigErrors) {
  const ExperimentConfig ok = config(8, 100, "clairvoyant:0.2", "bernoulli:0.5");
  EXPECT_NO_THROW(resolve(ok));

  auto both = ok;
  both.exponent = 0.35;
  EXPECT_THROW(resolve(both), ConfigError);
  auto neither = ok;
  neither.m.reset();
  EXPECT_THROW(resolve(neither), ConfigError);
  auto small = ok;
  small.m = 1;
  EXPECT_THROW(resolve(small), ConfigError);
  auto log_small = ok;
  log_small.rule = "log:0.05";
  EXPECT_THROW(resolve(log_small), ConfigError);
  log_small.m = 9;
  EXPECT_NO_THROW(resolve(log_small));
  auto bad_rule = ok;
  bad_rule.rule = "hinge";
  EXPECT_THROW(resolve(bad_rule), ConfigError);
  auto zero_T = ok;
  zero_T.T = 0;
  EXPECT_THROW(resolve(zero_T), ConfigError);

  for (const char* o : {"truth", "noisy:0.1", "clairvoyant:0.2"}) {
    auto adv = ok;
    adv.labels = "adversarial";
    adv.oracle = o;
    EXPECT_THROW(resolve(adv), ConfigError) << o;
  }
  auto adv = ok;
  adv.labels = "adversarial";
  adv.oracle = "constant:0.3";
  EXPECT_NO_THROW(resolve(adv));

  auto mw = ok;
  mw.forecaster = ForecasterKind::mw;
  mw.m = 20;
  mw.T = 10;
  EXPECT_THROW(resolve(mw), ConfigError);
  mw.T = 100;
  EXPECT_NO_THROW(resolve(mw));

  EXPECT_EQ(parse_forecaster("mw"), ForecasterKind::mw);
  EXPECT_THROW(parse_forecaster("oracle"), ConfigError);
}

TEST(RunExperiment, TraceShape) {
  const auto tr = run_experiment(config(8, 1000, "clairvoyant:0.2", "bernoulli:0.5"));
  ASSERT_EQ(tr.rounds.size(), 1000u);
  EXPECT_EQ(tr.stats.rounds(), 1000u);
  std::vector<std::size_t> ts;
  for (const auto& c : tr.checkpoints) ts.push_back(c.t);
  EXPECT_EQ(ts, (std::vector<std::size_t>{1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1000}));
  for (std::size_t k = 0; k < tr.rounds.size(); ++k) {
    const auto& r = tr.rounds[k];
    EXPECT_EQ(r.t, k + 1);
    EXPECT_NEAR(r.q, r.y ? 0.8 : 0.2, 1e-15);
    const double scaled = r.p * 8.0;
    EXPECT_NEAR(scaled, std::round(scaled), 1e-12);
  }
  EXPECT_DOUBLE_EQ(tr.checkpoints.back().calibration, tr.stats.calibration_rate());
  EXPECT_GT(tr.f_evaluations, 0u);
}

TEST(RunExperiment, PassthroughTruthOnGridHasZeroRegret) {
  ExperimentConfig c = config(8, 2000, "truth", "bernoulli:0.25");
  c.forecaster = ForecasterKind::passthrough;
  const auto tr = run_experiment(c);
  EXPECT_DOUBLE_EQ(tr.stats.average_regret(), 0.0);
  for (const auto& r : tr.rounds) EXPECT_DOUBLE_EQ(r.p, 0.25);

  c.oracle = "constant:0.62";
  const auto off = run_experiment(c);
  for (const auto& r : off.rounds) EXPECT_DOUBLE_EQ(r.p, 0.625);
}

TEST(RunExperiment, SameSeedSameTrace) {
  for (auto kind : {ForecasterKind::approach, ForecasterKind::mw}) {
    ExperimentConfig c = config(8, 1500, "noisy:0.1", "bernoulli:0.3", 77);
    c.forecaster = kind;
    const auto a = run_experiment(c), b = run_experiment(c);
    ASSERT_EQ(a.rounds.size(), b.rounds.size());
    for (std::size_t k = 0; k < a.rounds.size(); ++k) {
      EXPECT_EQ(a.rounds[k].q, b.rounds[k].q);
      EXPECT_EQ(a.rounds[k].p, b.rounds[k].p);
      EXPECT_EQ(a.rounds[k].y, b.rounds[k].y);
    }
    c.seed = 78;
    const auto other = run_experiment(c);
    bool differs = false;
    for (std::size_t k = 0; k < a.rounds.size(); ++k) differs = differs || a.rounds[k].y != other.rounds[k].y;
    EXPECT_TRUE(differs);
  }
}

TEST(RunExperiment, ForecastDoesNotDependOnCurrentLabel) {
  // Two label streams that agree up to round 5 and differ there.
  for (auto kind : {ForecasterKind::approach, ForecasterKind::mw}) {
    ExperimentConfig a = config(8, 7, "constant:0.4", "periodic:0,1,1,0,1,1,0", 3);
    a.forecaster = kind;
    ExperimentConfig b = a;
    b.labels = "periodic:0,1,1,0,0,1,0";
    const auto ta = run_experiment(a), tb = run_experiment(b);
    for (std::size_t k = 0; k < 5; ++k) EXPECT_EQ(ta.rounds[k].p, tb.rounds[k].p) << "round " << k + 1;
    EXPECT_NE(ta.rounds[4].y, tb.rounds[4].y);
  }
}

TEST(RunExperiment, ApproachBoundUnderEveryAdversary) {
  const std::size_t T = 4096;
  const double bound = std::sqrt(4.0 * 9.0 + 1.0) * std::sqrt(2.0) / std::sqrt(static_cast<double>(T));
  const std::vector<std::pair<std::string, std::string>> scenarios{
      {"clairvoyant:0.2", "bernoulli:0.5"}, {"clairvoyant:0.2", "periodic:0,1"}, {"constant:0.5", "bernoulli:0.9"},
      {"truth", "bernoulli:0.3"},           {"noisy:0.2", "bernoulli:0.6"},     {"constant:0.5", "adversarial"},
      {"constant:0.1", "adversarial"},      {"constant:1", "adversarial"}};
  for (const auto& [o, l] : scenarios) {
    for (std::uint64_t seed : {1u, 2u}) {
      const auto ex = resolve(config(8, T, o, l, seed));
      const auto tr = run_experiment(ex, {.keep_rounds = false});
      EXPECT_LE(tr.final_distance(ex.game), bound) << o << " " << l;
      EXPECT_DOUBLE_EQ(tr.checkpoints.back().distance, tr.final_distance(ex.game));
    }
  }
}

TEST(SlopeFit, SyntheticPowerLaws) {
  std::vector<RatePoint> pts;
  for (int e = 10; e <= 16; ++e) pts.push_back({std::ldexp(1.0, e), 3.0 * std::pow(std::ldexp(1.0, e), -0.5)});
  auto f = fit_loglog_slope(pts);
  EXPECT_NEAR(f.slope, -0.5, 1e-12);
  EXPECT_NEAR(f.intercept, std::log(3.0), 1e-10);
  EXPECT_NEAR(f.r_squared, 1.0, 1e-12);

  for (auto& p : pts) p.value = 0.7;
  f = fit_loglog_slope(pts);
  EXPECT_NEAR(f.slope, 0.0, 1e-15);
  EXPECT_DOUBLE_EQ(f.r_squared, 1.0);

  std::vector<double> lx, ly;
  for (auto& p : pts) {
    p.value = std::pow(p.T, -1.0 / 3.0);
    lx.push_back(std::log(p.T));
    ly.push_back(std::log(p.value));
  }
  f = fit_loglog_slope(pts);
  EXPECT_NEAR(f.slope, -1.0 / 3.0, 1e-12);
  EXPECT_NEAR(f.slope, oracle::least_squares(lx, ly).first, 1e-12);
}

TEST(SlopeFit, NoisyDataMatchesReference) {
  oracle::Gen gen(52);
  for (int k = 0; k < 200; ++k) {
    std::vector<RatePoint> pts;
    std::vector<double> lx, ly;
    const std::size_t n = gen.index(3, 12);
    for (std::size_t i = 0; i < n; ++i) {
      const double T = std::ldexp(1.0, static_cast<int>(8 + i));
      const double v = std::exp(gen.range(-5, 1));
      pts.push_back({T, v});
      lx.push_back(std::log(T));
      ly.push_back(std::log(v));
    }
    const auto f = fit_loglog_slope(pts);
    const auto [s, b] = oracle::least_squares(lx, ly);
    EXPECT_NEAR(f.slope, s, 1e-9);
    EXPECT_NEAR(f.intercept, b, 1e-8);
    EXPECT_GE(f.r_squared, -1e-12);
    EXPECT_LE(f.r_squared, 1.0 + 1e-12);
  }
}

TEST(SlopeFit, Errors) {
  const std::vector<RatePoint> two{{1, 1}, {2, 1}};
  EXPECT_THROW(fit_loglog_slope(two), std::invalid_argument);
  const std::vector<RatePoint> zero{{1, 1}, {2, 0}, {4, 1}};
  EXPECT_THROW(fit_loglog_slope(zero), std::domain_error);
  const std::vector<RatePoint> same{{2, 1}, {2, 3}, {2, 1}};
  EXPECT_THROW(fit_loglog_slope(same), std::domain_error);
}

TEST(Sweep, MeansMatchManualAggregation) {
  ExperimentConfig base = config(8, 0, "clairvoyant:0.2", "bernoulli:0.5", 10);
  base.m.reset();
  base.exponent = 1.0 / 3.0;
  const std::vector<std::size_t> grid{256, 512, 1024};
  const auto res = sweep(base, grid, 4, 3);
  ASSERT_EQ(res.rows.size(), 3u);
  ASSERT_EQ(res.runs.size(), 12u);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double cal = 0, reg = 0, rec = 0;
    std::vector<double> cals;
    for (std::uint64_t k = 0; k < 4; ++k) {
      ExperimentConfig c = base;
      c.T = grid[g];
      c.seed = 10 + k;
      const auto ex = resolve(c);
      const auto tr = run_experiment(ex);
      const double delta = 4.0 * 2.0 / static_cast<double>(ex.game.m() * ex.game.m());
      cal += tr.stats.calibration_rate();
      reg += tr.stats.average_regret();
      rec += tr.stats.recalibration_rate(delta);
      cals.push_back(tr.stats.calibration_rate());
    }
    const auto& row = res.rows[g];
    EXPECT_EQ(row.T, grid[g]);
    EXPECT_EQ(row.m, resolution_for_exponent(grid[g], 1.0 / 3.0));
    EXPECT_NEAR(row.calibration.mean, cal / 4, 1e-15);
    EXPECT_NEAR(row.regret.mean, reg / 4, 1e-15);
    EXPECT_NEAR(row.recalibration.mean, rec / 4, 1e-15);
    double ss = 0;
    for (double x : cals) ss += (x - cal / 4) * (x - cal / 4);
    EXPECT_NEAR(row.calibration.stderr_, std::sqrt(ss / 3.0 / 4.0), 1e-15);
    EXPECT_DOUBLE_EQ(row.bound, approachability_bound(row.m, row.T));
  }

  const auto serial = sweep(base, grid, 4, 1);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    EXPECT_EQ(serial.rows[g].recalibration.mean, res.rows[g].recalibration.mean);
  }
  EXPECT_EQ(res.recalibration_slope.has_value(), res.rows[0].recalibration.mean > 0 &&
                                                     res.rows[1].recalibration.mean > 0 &&
                                                     res.rows[2].recalibration.mean > 0);
}

TEST(Sweep, Errors) {
  ExperimentConfig base = config(8, 0, "clairvoyant:0.2", "bernoulli:0.5");
  EXPECT_THROW(sweep(base, std::vector<std::size_t>{}, 2), ConfigError);
  EXPECT_THROW(sweep(base, std::vector<std::size_t>{64}, 0), ConfigError);
  base.rule = "log:0.05";
  EXPECT_THROW(sweep(base, std::vector<std::size_t>{64}, 1), ConfigError);
}

TEST(Sweep, MeanStderr) {
  const std::vector<double> one{2.0};
  EXPECT_DOUBLE_EQ(mean_stderr(one).mean, 2.0);
  EXPECT_DOUBLE_EQ(mean_stderr(one).stderr_, 0.0);
  const std::vector<double> xs{1.0, 2.0, 3.0, 4.0};
  EXPECT_DOUBLE_EQ(mean_stderr(xs).mean, 2.5);
  EXPECT_NEAR(mean_stderr(xs).stderr_, std::sqrt(5.0 / 3.0 / 4.0), 1e-15);
}
