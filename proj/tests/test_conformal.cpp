#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <gtest/gtest.h>

#include "crl/conformal.hpp"

namespace crl {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

class FixedModel final : public ReturnModel {
 public:
  FixedModel(std::vector<double> atoms, double value)
      : dist_(ReturnDistribution::particles(std::move(atoms))), value_(value) {}
  ReturnDistribution distribution(const State&) const override { return dist_; }
  double value(const State&) const override { return value_; }

 private:
  ReturnDistribution dist_;
  double value_;
};

ReplayBuffer toy_buffer(int n, Rng& rng) {
  ReplayBuffer buffer;
  buffer.k = 1;
  for (int i = 0; i < n; ++i) {
    Segment seg;
    seg.states = {State{0.0}, State{1.0}};
    seg.actions = {0};
    seg.rewards = {2.0 * standard_normal(rng)};
    seg.trajectory_id = i;
    buffer.segments.push_back(std::move(seg));
  }
  return buffer;
}

// Largest |G - center| over a grid such that G is covered by enough intervals.
double brute_force_radius(const std::vector<double>& radii, double xi, double step) {
  const std::size_t B = radii.size();
  const auto need = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil((1.0 - xi) * static_cast<double>(B) - 1e-9)));
  const double top = *std::max_element(radii.begin(), radii.end());
  double best = -1.0;
  for (double g = 0.0; g <= top + step; g += step) {
    const auto covered = static_cast<std::size_t>(
        std::count_if(radii.begin(), radii.end(), [g](double q) { return g <= q; }));
    if (covered >= need) best = g;
  }
  return best;
}

TEST(WeightedSampler, FrequenciesMatchWeights) {
  const std::vector<double> w{1, 2, 3, 4, 10};
  Rng rng(1);
  const auto idx = weighted_subsample(w, 100000, rng);
  std::vector<double> freq(5, 0.0);
  for (std::size_t i : idx) freq[i] += 1.0 / 100000.0;
  double tv = 0.0;
  for (std::size_t i = 0; i < 5; ++i) tv += 0.5 * std::abs(freq[i] - w[i] / 20.0);
  EXPECT_LT(tv, 0.01);
}

TEST(WeightedSampler, PointMassAlwaysDrawn) {
  const std::vector<double> w{0, 0, 7, 0};
  Rng rng(2);
  for (std::size_t i : weighted_subsample(w, 1000, rng)) EXPECT_EQ(i, 2u);
}

TEST(WeightedSampler, RejectsDegenerateWeights) {
  EXPECT_THROW(WeightedSampler(std::vector<double>{0.0, 0.0}), std::invalid_argument);
  EXPECT_THROW(WeightedSampler(std::vector<double>{}), std::invalid_argument);
}

TEST(ConformalQuantile, RankForDefaultSubsample) {
  EXPECT_EQ(conformal_rank(200, 0.1, 0.8), 184u);
  std::vector<double> scores(200);
  std::iota(scores.begin(), scores.end(), 1.0);
  std::reverse(scores.begin(), scores.end());
  const ConformalQuantile q = conformal_quantile(scores, 0.1, 0.8);
  EXPECT_EQ(q.index, 184u);
  EXPECT_DOUBLE_EQ(q.radius, 184.0);
  EXPECT_FALSE(q.infinite);
}

TEST(ConformalQuantile, BoundaryCases) {
  const std::vector<double> same(17, 3.25);
  EXPECT_DOUBLE_EQ(conformal_quantile(same, 0.1, 0.8).radius, 3.25);
  const std::vector<double> one{4.0};
  const ConformalQuantile q = conformal_quantile(one, 0.1, 1.0);
  EXPECT_EQ(q.index, 1u);
  EXPECT_DOUBLE_EQ(q.radius, 4.0);
  EXPECT_THROW(conformal_quantile(std::vector<double>{}, 0.1, 0.8), std::invalid_argument);
}

TEST(ConformalQuantile, AtLeastRankScoresBelowRadius) {
  Rng rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t l = 1 + rng() % 300;
    const double alpha = 0.01 + 0.5 * uniform01(rng);
    const double xi = 0.05 + 0.95 * uniform01(rng);
    std::vector<double> scores(l);
    for (double& s : scores) s = std::abs(standard_normal(rng));
    const ConformalQuantile q = conformal_quantile(scores, alpha, xi);
    if (q.infinite) continue;
    const auto below = std::count_if(scores.begin(), scores.end(), [&](double s) { return s <= q.radius; });
    EXPECT_GE(static_cast<std::size_t>(below),
              static_cast<std::size_t>(std::ceil(l * (1.0 - alpha * xi) - 1e-9)));
  }
}

TEST(ConformalQuantile, MonotoneInAlpha) {
  Rng rng(4);
  std::vector<double> scores(150);
  for (double& s : scores) s = std::abs(standard_normal(rng));
  double previous = kInf;
  for (double alpha = 0.01; alpha < 0.99; alpha += 0.01) {
    const double r = conformal_quantile(scores, alpha, 0.8).radius;
    EXPECT_LE(r, previous);
    previous = r;
  }
}

TEST(SingleInterval, Cases) {
  const Interval a = single_interval(5.0, 2.0);
  EXPECT_DOUBLE_EQ(a.lower, 3.0);
  EXPECT_DOUBLE_EQ(a.upper, 7.0);
  const Interval b = single_interval(5.0, 0.0);
  EXPECT_DOUBLE_EQ(b.length(), 0.0);
  EXPECT_TRUE(b.contains(5.0));
  const Interval c = single_interval(5.0, kInf);
  EXPECT_TRUE(c.infinite());
  EXPECT_TRUE(c.contains(-1e300));
}

TEST(Aggregate, ThirdOfFiveRadii) {
  std::vector<Interval> intervals;
  for (double r : {4.0, 1.0, 5.0, 3.0, 2.0}) intervals.push_back(single_interval(0.0, r));
  const PredictionRegion region = aggregate(intervals, 0.4);
  EXPECT_DOUBLE_EQ(region.radius, 3.0);
  EXPECT_NEAR(brute_force_radius(region.radii, 0.4, 1e-3), 3.0, 1e-3);
}

TEST(Aggregate, SingleIntervalForAnyXi) {
  const std::vector<Interval> one{single_interval(2.0, 1.5)};
  for (double xi : {0.05, 0.5, 0.8, 1.0}) {
    const PredictionRegion r = aggregate(one, xi);
    EXPECT_DOUBLE_EQ(r.center, 2.0);
    EXPECT_DOUBLE_EQ(r.radius, 1.5);
  }
}

TEST(Aggregate, SmallXiIntersects) {
  std::vector<Interval> intervals;
  for (double r : {4.0, 1.0, 5.0, 3.0, 2.0}) intervals.push_back(single_interval(0.0, r));
  EXPECT_DOUBLE_EQ(aggregate(intervals, 0.01).radius, 1.0);
  EXPECT_DOUBLE_EQ(aggregate(intervals, 1.0).radius, 5.0);
}

TEST(Aggregate, MixedCentersRejected) {
  const std::vector<Interval> intervals{single_interval(0.0, 1.0), single_interval(0.5, 1.0)};
  EXPECT_THROW(aggregate(intervals, 0.5), std::invalid_argument);
}

TEST(Aggregate, InfiniteRoundsCountAsLargest) {
  std::vector<Interval> intervals{single_interval(0.0, 1.0), single_interval(0.0, kInf),
                                  single_interval(0.0, 2.0)};
  EXPECT_DOUBLE_EQ(aggregate(intervals, 0.5).radius, 2.0);
  EXPECT_TRUE(aggregate(intervals, 0.9).infinite());
}

TEST(Aggregate, MatchesBruteForceOnRandomRadii) {
  Rng rng(5);
  const double step = 1e-3;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t B = 1 + rng() % 30;
    const double xi = 0.02 + 0.96 * uniform01(rng);
    std::vector<double> radii(B);
    for (double& r : radii) r = 3.0 * uniform01(rng);
    const double closed = aggregate_radius(radii, xi);
    EXPECT_NEAR(closed, brute_force_radius(radii, xi, step), step) << "B=" << B << " xi=" << xi;
  }
}

TEST(Calibration, RadiusIsMonotoneInAlphaPerDraw) {
  Rng rng(6);
  const ReplayBuffer buffer = toy_buffer(500, rng);
  const std::vector<double> w(buffer.size(), 1.0);
  const FixedModel model({-1.0, 0.0, 1.0}, 0.0);
  const ConformalCalibrator cal(buffer, w, model, 0.8);
  const CalibrationDraws draws = cal.draw(20, 100, rng);
  EXPECT_EQ(draws.rounds(), 20);
  for (double xi : {0.3, 0.8, 1.0}) {
    double previous = kInf;
    for (double alpha = 0.02; alpha < 0.9; alpha += 0.02) {
      const double r = draws.radius(alpha, xi);
      EXPECT_LE(r, previous);
      previous = r;
    }
  }
}

TEST(Calibration, RankNeverExceedsTinySubsample) {
  Rng rng(7);
  const ReplayBuffer buffer = toy_buffer(50, rng);
  const std::vector<double> w(buffer.size(), 1.0);
  const FixedModel model({0.0}, 0.0);
  const CalibrationDraws draws = ConformalCalibrator(buffer, w, model, 0.8).draw(5, 3, rng);
  EXPECT_FALSE(std::isinf(draws.radius(0.1, 0.8)));
  for (const auto& q : draws.round_quantiles(0.1, 0.8)) {
    EXPECT_EQ(q.index, 3u);
    EXPECT_FALSE(q.infinite);
  }
}

TEST(Predict, SingleRoundWithPointModel) {
  // One round, tail fixed at zero: the radius is an order statistic of |R| over the subsample.
  Rng rng(8);
  const ReplayBuffer buffer = toy_buffer(300, rng);
  const std::vector<double> w(buffer.size(), 1.0);
  const FixedModel model({0.0}, 0.0);
  const ConformalConfig cfg{.alpha = 0.1, .xi = 0.5, .B = 1, .l = 100};
  Rng a(9);
  const PredictionRegion region = predict(buffer, w, model, State{0.0}, cfg, 0.8, a);

  // Replay the same stream: one index draw then one tail draw per calibration point.
  Rng b(9);
  const WeightedSampler sampler(w);
  const ReturnDistribution tail = model.distribution(State{1.0});
  std::vector<double> scores;
  for (int j = 0; j < 100; ++j) {
    const std::size_t i = sampler(b);
    scores.push_back(std::abs(buffer.segments[i].rewards[0] + 0.8 * tail.sample(b)));
  }
  std::sort(scores.begin(), scores.end());
  EXPECT_DOUBLE_EQ(region.radius, scores[conformal_rank(100, 0.1, 0.5) - 1]);
  EXPECT_DOUBLE_EQ(region.center, 0.0);
}

TEST(Predict, DeterministicGivenSeed) {
  Rng rng(10);
  const ReplayBuffer buffer = toy_buffer(300, rng);
  std::vector<double> w(buffer.size());
  for (double& x : w) x = 0.5 + uniform01(rng);
  const FixedModel model({-2.0, 0.5, 3.0}, 0.5);
  const ConformalConfig cfg{.alpha = 0.1, .xi = 0.8, .B = 10, .l = 50};
  Rng a(11), b(11);
  const PredictionRegion r1 = predict(buffer, w, model, State{0.0}, cfg, 0.8, a);
  const PredictionRegion r2 = predict(buffer, w, model, State{0.0}, cfg, 0.8, b);
  EXPECT_EQ(r1.radii, r2.radii);
  EXPECT_EQ(r1.radius, r2.radius);
  EXPECT_EQ(r1.center, 0.5);
}

TEST(Predict, ExchangeableCoverage) {
  // Calibration and test returns from the same law, exact pseudo-returns, unit weights.
  const double alpha = 0.1;
  const int trials = 2000;
  const int n = 200;
  Rng rng(12);
  const FixedModel model({0.0}, 0.0);
  const ConformalConfig cfg{.alpha = alpha, .xi = 1.0, .B = 1, .l = n};
  const std::vector<double> w(n, 1.0);
  int covered = 0;
  for (int trial = 0; trial < trials; ++trial) {
    const ReplayBuffer buffer = toy_buffer(n, rng);
    const PredictionRegion region = predict(buffer, w, model, State{0.0}, cfg, 0.8, rng);
    covered += region.contains(2.0 * standard_normal(rng));
  }
  const double cov = static_cast<double>(covered) / trials;
  const double se = std::sqrt((1.0 - alpha) * alpha / trials);
  EXPECT_GE(cov, 1.0 - alpha - 2.0 * se);
}

TEST(Predict, ResampledCoverageMatchesOrderStatisticOracle) {
  // Resampling l = n scores with replacement and taking the 180th of 200 gives expected
  // coverage E[U_boot(180)] = 0.8935 for continuous scores (independent simulation).
  const int trials = 20000;
  const int n = 200;
  Rng rng(13);
  const FixedModel model({0.0}, 0.0);
  const ConformalConfig cfg{.alpha = 0.1, .xi = 1.0, .B = 1, .l = n};
  const std::vector<double> w(n, 1.0);
  int covered = 0;
  for (int trial = 0; trial < trials; ++trial) {
    const ReplayBuffer buffer = toy_buffer(n, rng);
    const PredictionRegion region = predict(buffer, w, model, State{0.0}, cfg, 0.8, rng);
    covered += region.contains(2.0 * standard_normal(rng));
  }
  const double cov = static_cast<double>(covered) / trials;
  const double se = std::sqrt(0.8935 * 0.1065 / trials);
  EXPECT_NEAR(cov, 0.8935, 3.0 * se);
}

}  // namespace
}  // namespace crl
