#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "crl/conformal.hpp"
#include "crl/env.hpp"
#include "crl/weights.hpp"

namespace crl {
namespace {

const State kX1{0.0};
const State kX2{1.0};

int chain_cell(const State& s) { return s.index(); }

Segment make_segment(std::vector<State> states, std::vector<Action> actions) {
  Segment seg;
  seg.rewards.assign(actions.size(), 0.0);
  seg.states = std::move(states);
  seg.actions = std::move(actions);
  return seg;
}

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

TEST(FrequencyEstimate, LaplaceSmoothing) {
  std::vector<Transition> data;
  for (int i = 0; i < 30; ++i) data.push_back({.s = kX1, .a = 1});
  for (int i = 0; i < 10; ++i) data.push_back({.s = kX1, .a = 0});
  const FrequencyPolicyEstimate est(data, 2, 2, chain_cell);
  EXPECT_DOUBLE_EQ(est.prob(kX1, 1), 31.0 / 42.0);
  EXPECT_DOUBLE_EQ(est.prob(kX1, 0), 11.0 / 42.0);
  EXPECT_DOUBLE_EQ(est.prob(kX2, 0), 0.5);
  EXPECT_DOUBLE_EQ(est.prob(kX2, 1), 0.5);
  EXPECT_EQ(est.count(0, 1), 30);
}

TEST(FrequencyEstimate, FloorAppliesToRareActions) {
  std::vector<Transition> data;
  for (int i = 0; i < 1000; ++i) data.push_back({.s = kX1, .a = 1});
  const FrequencyPolicyEstimate est(data, 2, 2, chain_cell);
  EXPECT_DOUBLE_EQ(est.prob(kX1, 0), kBehaviorFloor);
}

TEST(LogisticEstimate, RecoversSigmoidMixtureBehavior) {
  const auto env = make_continuous_env();
  const SigmoidMixturePolicy behavior(0.5, 0.5);
  Rng rng(1);
  std::vector<Transition> data;
  for (int i = 0; i < 200; ++i) {
    const Trajectory tr = sample_trajectory(*env, behavior, 30, rng, i);
    data.insert(data.end(), tr.steps.begin(), tr.steps.end());
  }
  const LogisticPolicyEstimate est(data);
  double err = 0.0;
  const int n = 310;
  for (int i = 0; i < n; ++i) {
    const State s = env->initial_state(rng);
    err += std::abs(est.prob(s, 1) - behavior.prob(s, 1));
  }
  EXPECT_LT(err / n, 0.05);
}

TEST(OffPolicyWeight, EqualPoliciesReduceToStateWeight) {
  const SwitchPolicy p(0.4, 0.8);
  const Segment seg = make_segment({kX1, kX2, kX2}, {1, 0});
  EXPECT_DOUBLE_EQ(offpolicy_weight(seg, OnPolicyWeight::identity(), p, p), 1.0);
}

TEST(OffPolicyWeight, TwoStepRatioProduct) {
  const SwitchPolicy target(0.6, 0.6);
  const UniformPolicy behavior(2);
  const Segment seg = make_segment({kX1, kX2, kX1}, {1, 1});
  EXPECT_NEAR(offpolicy_weight(seg, OnPolicyWeight::identity(), target, behavior), 1.44, 1e-12);
}

TEST(OffPolicyWeight, ChainTransitionRatio) {
  const SwitchPolicy target(0.5, 0.7);
  const SwitchPolicy behavior(0.4, 0.8);
  // x1 -stay-> x1 -switch-> x2 -switch-> x1
  const Segment seg = make_segment({kX1, kX1, kX2, kX1}, {0, 1, 1});
  const double expected = (0.5 / 0.6) * (0.5 / 0.4) * (0.7 / 0.8);
  EXPECT_NEAR(offpolicy_weight(seg, OnPolicyWeight::identity(), target, behavior), expected, 1e-12);
}

TEST(OffPolicyWeight, ChangeOfMeasureOverSegments) {
  // Weighted resampling of behavior segments reproduces target-chain path frequencies.
  const FoldedChain chain = make_two_state_env(0.4, 0.8);
  const SwitchPolicy target(0.5, 0.7);
  Rng rng(2);
  ReplayBuffer buffer;
  buffer.k = 2;
  for (int i = 0; i < 20000; ++i) {
    const Trajectory tr = rollout_from(*chain.env, *chain.policy, kX1, 2, rng, i);
    Segment seg = make_segment({tr.steps[0].s, tr.steps[1].s, tr.steps[1].s_next},
                               {tr.steps[0].a, tr.steps[1].a});
    buffer.segments.push_back(std::move(seg));
  }
  const auto raw = offpolicy_buffer_weights(buffer, OnPolicyWeight::identity(), target, *chain.policy);
  const NormalizedWeights w = normalize_weights(raw);
  const auto idx = weighted_subsample(w.weights, 200000, rng);
  int both_switch = 0;
  for (std::size_t i : idx) {
    const Segment& seg = buffer.segments[i];
    both_switch += seg.actions[0] == 1 && seg.actions[1] == 1;
  }
  EXPECT_NEAR(static_cast<double>(both_switch) / idx.size(), 0.5 * 0.7, 0.01);
}

TEST(OnPolicyWeight, NoShiftGivesUnitWeights) {
  Rng rng(3);
  std::vector<State> a, b;
  for (int i = 0; i < 20000; ++i) {
    a.push_back(State{standard_normal(rng), standard_normal(rng)});
    b.push_back(State{standard_normal(rng), standard_normal(rng)});
  }
  const OnPolicyWeight w = fit_onpolicy_weight(a, b);
  ASSERT_FALSE(w.degenerate());
  std::vector<double> raw;
  for (const State& s : b) raw.push_back(w(s));
  const NormalizedWeights n = normalize_weights(raw);
  for (double x : n.weights) EXPECT_NEAR(x, 1.0, 0.15);
}

TEST(OnPolicyWeight, DiscreteOddsMatchFrequencyRatio) {
  // Two-point design: the logistic fit is saturated, so odds equal count ratios.
  std::vector<State> initial, all;
  for (int i = 0; i < 60; ++i) initial.push_back(kX1);
  for (int i = 0; i < 40; ++i) initial.push_back(kX2);
  for (int i = 0; i < 200; ++i) all.push_back(kX1);
  for (int i = 0; i < 800; ++i) all.push_back(kX2);
  const OnPolicyWeight w = fit_onpolicy_weight(initial, all);
  EXPECT_NEAR(w(kX1), 60.0 / 200.0, 1e-4);
  EXPECT_NEAR(w(kX2), 40.0 / 800.0, 1e-4);
  // Density ratios P0 / Pcal are 0.6 / 0.2 and 0.4 / 0.8.
  EXPECT_NEAR(w(kX1) / w(kX2), 3.0 / 0.5, 1e-3);
}

TEST(OnPolicyWeight, DegenerateInputsFallBackToIdentity) {
  const std::vector<State> none;
  const std::vector<State> some{kX1, kX2};
  EXPECT_TRUE(fit_onpolicy_weight(none, some).degenerate());
  const std::vector<State> constant{kX1, kX1};
  const OnPolicyWeight w = fit_onpolicy_weight(constant, constant);
  EXPECT_TRUE(w.degenerate());
  EXPECT_EQ(w(kX2), 1.0);
  EXPECT_FALSE(w.diagnostic().empty());
}

TEST(LogisticRegression, SeparableLikeDataStaysFinite) {
  Eigen::MatrixXd x(4, 2);
  x << 1, 0, 1, 0, 1, 1, 1, 1;
  Eigen::VectorXd y(4);
  y << 0, 0, 1, 1;
  const LogisticRegression fit = LogisticRegression::fit(x, y);
  EXPECT_TRUE(std::isfinite(fit.coefficients()(1)));
  EXPECT_GT(fit.predict(x.row(2).transpose()), 0.99);
}

TEST(Normalize, MeanOneWithoutClipping) {
  const std::vector<double> raw{1.0, 2.0, 3.0, 6.0};
  const NormalizedWeights w = normalize_weights(raw);
  EXPECT_NEAR(mean(w.weights), 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(w.scale, 4.0 / 12.0);
  EXPECT_EQ(w.cap_hits, 0);
}

TEST(Normalize, CapIsRespectedWithMeanOne) {
  std::vector<double> raw(100, 1.0);
  raw[0] = 1e6;
  raw[1] = 5e5;
  const NormalizedWeights w = normalize_weights(raw, 20.0);
  EXPECT_NEAR(mean(w.weights), 1.0, 1e-12);
  EXPECT_EQ(w.cap_hits, 2);
  for (double x : w.weights) EXPECT_LE(x, 20.0);
  EXPECT_DOUBLE_EQ(w.weights[0], 20.0);
  // 98 c + 2 * 20 = 100.
  EXPECT_NEAR(w.weights[5], 60.0 / 98.0, 1e-12);
}

TEST(Normalize, RandomVectorsKeepInvariants) {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> raw(50);
    for (double& x : raw) x = std::exp(3.0 * standard_normal(rng));
    const NormalizedWeights w = normalize_weights(raw, 10.0);
    EXPECT_NEAR(mean(w.weights), 1.0, 1e-9);
    int hits = 0;
    for (std::size_t i = 0; i < raw.size(); ++i) {
      EXPECT_LE(w.weights[i], 10.0 + 1e-12);
      if (w.weights[i] >= 10.0) ++hits;
      else EXPECT_NEAR(w.weights[i], w.scale * raw[i], 1e-9);
    }
    EXPECT_EQ(hits, w.cap_hits);
  }
}

TEST(Normalize, RejectsBadInput) {
  EXPECT_THROW(normalize_weights(std::vector<double>{}), std::invalid_argument);
  EXPECT_THROW(normalize_weights(std::vector<double>{0.0, 0.0}), std::invalid_argument);
  EXPECT_THROW(normalize_weights(std::vector<double>{1.0, -1.0}), std::invalid_argument);
}

TEST(WeightSummary, KishEffectiveSampleSize) {
  const NormalizedWeights w{{0.5, 1.5, 1.0, 1.0}, 1.0, 0};
  const WeightSummary s = summarize_weights(w);
  EXPECT_DOUBLE_EQ(s.min, 0.5);
  EXPECT_DOUBLE_EQ(s.max, 1.5);
  EXPECT_DOUBLE_EQ(s.mean, 1.0);
  EXPECT_NEAR(s.ess, 16.0 / 4.5, 1e-12);
  EXPECT_EQ(s.count, 4u);
}

}  // namespace
}  // namespace crl
