#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <gtest/gtest.h>

#include "crl/env.hpp"
#include "crl/kde.hpp"
#include "crl/quantile_model.hpp"
#include "crl/return_distribution.hpp"

namespace crl {
namespace {

const State kX1{0.0};
const State kX2{1.0};

// v = (I - gamma P)^{-1} r for the two-state chain, by Cramer's rule.
std::pair<double, double> chain_values(double p12, double p21, double gamma) {
  const double a = 1.0 - gamma * (1.0 - p12), b = -gamma * p12;
  const double c = -gamma * p21, d = 1.0 - gamma * (1.0 - p21);
  const double det = a * d - b * c;
  return {(2.0 * d - b * 1.0) / det, (a * 1.0 - c * 2.0) / det};
}

std::vector<Transition> chain_data(double p12, double p21, int n, int T, std::uint64_t seed) {
  const FoldedChain chain = make_two_state_env(p12, p21);
  std::vector<Transition> out;
  for (int i = 0; i < n; ++i) {
    const Trajectory tr = sample_trajectory(*chain.env, *chain.policy, T, derive_seed(seed, i), i);
    out.insert(out.end(), tr.steps.begin(), tr.steps.end());
  }
  return out;
}

TEST(ChainValues, BehaviorChainOracle) {
  const auto [v1, v2] = chain_values(0.4, 0.8, 0.8);
  EXPECT_NEAR(v1, 8.6207, 1e-4);
  EXPECT_NEAR(v2, 7.7586, 1e-4);
}

TEST(Qtd, SingleParticleStep) {
  TabularQuantileModel model(2, 1, 1, {.discount = 0.8, .step = 0.1});
  ASSERT_DOUBLE_EQ(model.levels()[0], 0.5);
  const Transition tr{.s = kX1, .a = 0, .r = 1.0, .s_next = kX2};
  qtd_update_on(model, tr);
  EXPECT_DOUBLE_EQ(model.theta(0, 0, 0), 0.05);
  EXPECT_DOUBLE_EQ(model.theta(1, 0, 0), 0.0);
}

TEST(Qtd, SingleParticleStepStateAction) {
  TabularQuantileModel model(2, 1, 2, {.discount = 0.8, .step = 0.1});
  const Transition tr{.s = kX1, .a = 1, .r = 1.0, .s_next = kX2};
  SwitchPolicy deterministic(1.0, 1.0);
  Rng rng(1);
  qtd_update_off(model, tr, deterministic, rng);
  EXPECT_DOUBLE_EQ(model.theta(0, 1, 0), 0.05);
  EXPECT_DOUBLE_EQ(model.theta(0, 0, 0), 0.0);
}

TEST(Qtd, TargetBelowAllParticlesPushesDown) {
  TabularQuantileModel model(2, 4, 1, {.discount = 0.8, .step = 0.1});
  for (int i = 0; i < 4; ++i) model.set_theta(0, 0, i, 10.0 + i);
  const Transition tr{.s = kX1, .a = 0, .r = 0.0, .s_next = kX2};
  qtd_update_on(model, tr);
  for (int i = 0; i < 4; ++i) {
    EXPECT_NEAR(model.theta(0, 0, i), 10.0 + i + 0.1 * (model.levels()[i] - 1.0), 1e-12);
  }
}

TEST(Qtd, QuantileDirectionMatchesHandComputation) {
  const std::vector<double> theta{0.0, 1.0};
  const std::vector<double> targets{0.5, 2.0};
  const std::vector<double> levels{0.25, 0.75};
  const auto dir = quantile_direction(theta, targets, levels, 0.0);
  // theta_0 = 0: both targets above, score tau each.
  EXPECT_DOUBLE_EQ(dir[0], 0.25);
  // theta_1 = 1: one below (tau - 1), one above (tau).
  EXPECT_DOUBLE_EQ(dir[1], 0.5 * ((0.75 - 1.0) + 0.75));
}

TEST(Qtd, TrainedTabularMeanMatchesBellmanSolve) {
  const auto data = chain_data(0.4, 0.8, 200, 30, 11);
  TabularQuantileModel model(2, 20, 1, {.discount = 0.8, .step = 0.1});
  Rng rng(12);
  train_qtd(model, data, nullptr, {.passes = 50, .batch_size = 1}, rng);
  const auto [v1, v2] = chain_values(0.4, 0.8, 0.8);
  const auto p1 = model.particles(kX1);
  const auto p2 = model.particles(kX2);
  EXPECT_NEAR(std::accumulate(p1.begin(), p1.end(), 0.0) / 20.0, v1, 0.3);
  EXPECT_NEAR(std::accumulate(p2.begin(), p2.end(), 0.0) / 20.0, v2, 0.3);
  EXPECT_TRUE(std::is_sorted(p1.begin(), p1.end()));
}

TEST(Qtd, OffPolicyMarginalMeanMatchesTargetChain) {
  const auto data = chain_data(0.4, 0.8, 200, 30, 21);
  auto model = std::make_shared<TabularQuantileModel>(2, 20, 2, QtdHyper{.discount = 0.8, .step = 0.1});
  auto target = std::make_shared<SwitchPolicy>(0.5, 0.7);
  Rng rng(22);
  train_qtd(*model, data, target.get(), {.passes = 50, .batch_size = 1}, rng);
  const TargetReturnModel returns(model, target);
  const auto [v1, v2] = chain_values(0.5, 0.7, 0.8);
  EXPECT_NEAR(returns.value(kX1), v1, 0.4);
  EXPECT_NEAR(returns.value(kX2), v2, 0.4);
}

TEST(Qtd, NoSwitchChainLearnsGaussianReturnSpread) {
  const auto data = chain_data(0.0, 0.0, 200, 30, 31);
  TabularQuantileModel model(2, 20, 1, {.discount = 0.8, .step = 0.05});
  Rng rng(32);
  train_qtd(model, data, nullptr, {.passes = 100, .batch_size = 1}, rng);
  const ReturnDistribution d = ReturnDistribution::particles(model.particles(kX1));
  EXPECT_NEAR(d.mean(), 10.0, 0.3);
  // Particle i sits near the N(10, 1/0.36) quantile at tau_i; compare the median pair.
  const double sd = std::sqrt(1.0 / 0.36);
  EXPECT_NEAR(d.quantile(0.9), 10.0 + 1.2816 * sd, 0.6);
  EXPECT_NEAR(d.quantile(0.1), 10.0 - 1.2816 * sd, 0.6);
}

TEST(Qtd, ZeroPassesLeavesInitialization) {
  const auto data = chain_data(0.4, 0.8, 5, 10, 41);
  TabularQuantileModel model(2, 20, 1, {.discount = 0.8, .step = 0.1});
  Rng rng(42);
  train_qtd(model, data, nullptr, {.passes = 0}, rng);
  EXPECT_EQ(model.max_abs(), 0.0);
}

TEST(Qtd, EmptyDataRejected) {
  TabularQuantileModel model(2, 20, 1, {});
  Rng rng(1);
  EXPECT_THROW(train_qtd(model, {}, nullptr, {}, rng), std::invalid_argument);
}

TEST(Qtd, ApproximateBackendsHaveExpectedShapes) {
  Rng rng(5);
  MlpQuantileModel mlp(2, 32, 30, 2, {.discount = 0.8, .step = 1e-3, .huber_kappa = 1.0}, 0.9, rng);
  EXPECT_EQ(mlp.predict(State{0.1, -0.2}, 1).size(), 30u);
  EXPECT_THROW(mlp.predict(State{0.1, -0.2}, 2), std::out_of_range);
  LinearQuantileModel lin(50, 20, 1, {.discount = 0.8, .step = 0.05}, 1e-3);
  EXPECT_EQ(lin.predict(State(std::vector<double>(50, 0.0)), 0).size(), 20u);
}

TEST(Qtd, SaveLoadRoundTrip) {
  Rng rng(6);
  MlpQuantileModel mlp(2, 8, 5, 2, {.discount = 0.8, .step = 1e-3}, 0.9, rng);
  std::stringstream ss;
  save_model(mlp, ss);
  const auto loaded = load_model(ss);
  const State s{0.3, -1.0};
  EXPECT_EQ(loaded->predict(s, 1), mlp.predict(s, 1));
}

TEST(Marginalize, DeterministicPolicySelectsOneAction) {
  TabularQuantileModel model(2, 3, 2, {});
  for (int i = 0; i < 3; ++i) {
    model.set_theta(0, 0, i, 1.0 + i);
    model.set_theta(0, 1, i, 5.0 + i);
  }
  const ReturnDistribution d = marginalize(model, kX1, SwitchPolicy(1.0, 1.0));
  EXPECT_EQ(std::vector<double>(d.atoms().begin(), d.atoms().end()),
            (std::vector<double>{5.0, 6.0, 7.0}));
}

TEST(Marginalize, UniformOverTwoSingleAtoms) {
  TabularQuantileModel model(2, 1, 2, {});
  model.set_theta(0, 0, 0, 0.0);
  model.set_theta(0, 1, 0, 2.0);
  const ReturnDistribution d = marginalize(model, kX1, UniformPolicy(2));
  EXPECT_DOUBLE_EQ(d.mean(), 1.0);
  EXPECT_DOUBLE_EQ(d.quantile(0.75), 2.0);
  EXPECT_DOUBLE_EQ(d.quantile(0.25), 0.0);
  EXPECT_DOUBLE_EQ(d.cdf(0.0), 0.5);
}

TEST(ReturnDistribution, MeanAndSampling) {
  EXPECT_DOUBLE_EQ(value_estimate(ReturnDistribution::particles({1.0, 2.0, 3.0})), 2.0);
  EXPECT_DOUBLE_EQ(value_estimate(ReturnDistribution::particles({4.5})), 4.5);
  Rng rng(7);
  const auto single = ReturnDistribution::particles({4.5});
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sample_return(single, rng), 4.5);
  const auto coin = ReturnDistribution::particles({0.0, 1.0});
  double sum = 0.0;
  for (int i = 0; i < 10000; ++i) sum += sample_return(coin, rng);
  EXPECT_NEAR(sum / 10000.0, 0.5, 0.02);
}

TEST(ReturnDistribution, QuantileIsLeftContinuousInverse) {
  const auto d = ReturnDistribution::particles({3.0, 1.0, 2.0, 4.0});
  EXPECT_DOUBLE_EQ(d.quantile(0.25), 1.0);
  EXPECT_DOUBLE_EQ(d.quantile(0.26), 2.0);
  EXPECT_DOUBLE_EQ(d.quantile(1.0), 4.0);
  for (double p = 0.01; p < 1.0; p += 0.01) EXPECT_GE(d.cdf(d.quantile(p)), p - 1e-12);
}

TEST(DrlQr, OrderStatisticIndices) {
  std::vector<double> atoms(20);
  std::iota(atoms.begin(), atoms.end(), 1.0);
  const auto d = ReturnDistribution::particles(atoms);
  const QuantileInterval a = drl_qr_interval(d, 20, 0.1);
  EXPECT_EQ(a.lower_index, 1);
  EXPECT_EQ(a.upper_index, 20);
  EXPECT_DOUBLE_EQ(a.lower, 1.0);
  EXPECT_DOUBLE_EQ(a.upper, 20.0);
  const QuantileInterval b = drl_qr_interval(d, 20, 0.2);
  EXPECT_EQ(b.lower_index, 2);
  EXPECT_EQ(b.upper_index, 19);
  for (double alpha : {0.05, 0.1, 0.3, 0.5, 0.9}) {
    for (int m : {1, 5, 20, 30}) {
      const QuantileInterval q = drl_qr_interval(d, m, alpha);
      EXPECT_EQ(q.lower_index + q.upper_index, m + 1);
    }
  }
  EXPECT_TRUE(drl_qr_interval(d, 5, 0.01).clipped);
}

TEST(Kde, DegenerateSamplesUseFloor) {
  const auto d = kde_return_estimator({0.0, 0.0, 0.0});
  EXPECT_DOUBLE_EQ(d.bandwidth(), kBandwidthFloor);
  EXPECT_NEAR(d.quantile(0.05), 0.0, 1e-5);
  EXPECT_NEAR(d.quantile(0.95), 0.0, 1e-5);
}

TEST(Kde, StandardNormalTailQuantiles) {
  Rng rng(8);
  std::vector<double> samples(10000);
  for (double& x : samples) x = standard_normal(rng);
  const auto d = kde_return_estimator(samples);
  EXPECT_NEAR(d.quantile(0.05), -1.645, 0.1);
  EXPECT_NEAR(d.quantile(0.95), 1.645, 0.1);
  const QuantileInterval eq = equal_tailed_interval(d, 0.1);
  EXPECT_DOUBLE_EQ(eq.lower, d.quantile(0.05));
}

TEST(Kde, SparseBucketsFallBackToPooledDensity) {
  std::vector<State> states;
  std::vector<double> returns;
  for (int i = 0; i < 50; ++i) {
    states.push_back(State{-0.5, 0.0});
    returns.push_back(-50.0 + 0.1 * i);
  }
  states.push_back(State{0.4, 0.06});
  returns.push_back(-1.0);
  const KdeReturnModel model(states, returns, GridBucketing{});
  EXPECT_FALSE(model.uses_fallback(State{-0.5, 0.0}));
  EXPECT_TRUE(model.uses_fallback(State{0.4, 0.06}));
  EXPECT_TRUE(model.uses_fallback(State{-1.1, -0.06}));
  EXPECT_EQ(model.populated_buckets(), 1);
  EXPECT_NEAR(model.value(State{-0.5, 0.0}), -47.55, 0.05);
}

}  // namespace
}  // namespace crl
