#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "crl/random.hpp"

namespace crl {

using Action = int;

/// Observation of an environment. Discrete environments store the state
/// index in features[0]; binary components are encoded as 0 (x1) / 1 (x2).
struct State {
  std::vector<double> features;

  State() = default;
  explicit State(std::vector<double> f) : features(std::move(f)) {}
  State(std::initializer_list<double> f) : features(f) {}

  std::size_t size() const { return features.size(); }
  double operator[](std::size_t i) const { return features[i]; }
  int index() const { return static_cast<int>(features.front()); }

  friend bool operator==(const State&, const State&) = default;
};

struct Transition {
  State s;
  Action a = 0;
  double r = 0.0;
  State s_next;
  int t = 0;
  int trajectory_id = 0;
};

struct Trajectory {
  int id = 0;
  std::vector<Transition> steps;

  std::size_t length() const { return steps.size(); }
};

struct StepOutcome {
  double reward = 0.0;
  State next;
};

/// Conditional distribution over a finite action set.
class Policy {
 public:
  virtual ~Policy() = default;

  virtual int num_actions() const = 0;
  /// pi(a|s). Throws std::out_of_range for actions outside [0, num_actions).
  virtual double prob(const State& s, Action a) const = 0;
  virtual Action sample(const State& s, Rng& rng) const;
  virtual std::string name() const = 0;

 protected:
  void check_action(Action a) const;
};

using PolicyPtr = std::shared_ptr<const Policy>;

double policy_prob(const Policy& policy, const State& s, Action a);

class Environment {
 public:
  explicit Environment(double discount);
  virtual ~Environment() = default;

  virtual State initial_state(Rng& rng) const = 0;
  virtual StepOutcome step(const State& s, Action a, Rng& rng) const = 0;
  virtual int num_actions() const = 0;
  virtual std::size_t state_dim() const = 0;
  virtual std::string name() const = 0;
  /// Number of distinct states for tabular environments, 0 otherwise.
  virtual int num_discrete_states() const { return 0; }
  /// Largest absolute one-step reward; used for truncation bounds.
  virtual double reward_scale() const = 0;
  /// True for zero-reward self-looping states; rollouts may stop there.
  virtual bool absorbing(const State&) const { return false; }

  double discount() const { return discount_; }

 private:
  double discount_;
};

using EnvironmentPtr = std::shared_ptr<const Environment>;

Trajectory sample_trajectory(const Environment& env, const Policy& policy, int horizon, Rng& rng,
                             int trajectory_id = 0);
Trajectory sample_trajectory(const Environment& env, const Policy& policy, int horizon,
                             std::uint64_t seed, int trajectory_id = 0);
/// Trajectory started from a given state instead of the initial-state sampler.
Trajectory rollout_from(const Environment& env, const Policy& policy, const State& start,
                        int horizon, Rng& rng, int trajectory_id = 0);

// ---------------------------------------------------------------------------
// Two-state chain. Action 1 means "switch to the other state", 0 means stay,
// so a policy over {stay, switch} is exactly a pair of switch probabilities.

class TwoStateEnv final : public Environment {
 public:
  /// `initial_x1` is the probability that a trajectory starts in x1.
  explicit TwoStateEnv(double initial_x1 = 0.5, double discount = 0.8);

  State initial_state(Rng& rng) const override;
  StepOutcome step(const State& s, Action a, Rng& rng) const override;
  int num_actions() const override { return 2; }
  std::size_t state_dim() const override { return 1; }
  std::string name() const override { return "two-state"; }
  int num_discrete_states() const override { return 2; }
  double reward_scale() const override { return 2.0; }

  double initial_x1() const { return initial_x1_; }

  static constexpr double kRewardMeanX1 = 2.0;
  static constexpr double kRewardMeanX2 = 1.0;

 private:
  double initial_x1_;
};

/// Switch probabilities (x1->x2, x2->x1) of the chain's first component.
class SwitchPolicy final : public Policy {
 public:
  SwitchPolicy(double p12, double p21);

  int num_actions() const override { return 2; }
  double prob(const State& s, Action a) const override;
  std::string name() const override;

  double p12() const { return p12_; }
  double p21() const { return p21_; }

 private:
  double p12_;
  double p21_;
};

/// A chain whose policy is folded into its transition probabilities.
struct FoldedChain {
  EnvironmentPtr env;
  PolicyPtr policy;
};

FoldedChain make_two_state_env(double p12, double p21, double discount = 0.8);

// ---------------------------------------------------------------------------
// Continuous two-dimensional state with a binary action.

struct ContinuousEnvOptions {
  /// Gain on the second state component. 0.75 keeps the process stable;
  /// 3.0 reproduces the literal (explosive) reading of the dynamics.
  double second_gain = 0.75;
  double noise_sd = 0.5;
  double discount = 0.8;
};

class ContinuousEnv final : public Environment {
 public:
  explicit ContinuousEnv(ContinuousEnvOptions opts = {});

  State initial_state(Rng& rng) const override;
  StepOutcome step(const State& s, Action a, Rng& rng) const override;
  /// Noise-free variant of step for explicit noise draws.
  StepOutcome step_with_noise(const State& s, Action a, double z1, double z2) const;
  int num_actions() const override { return 2; }
  std::size_t state_dim() const override { return 2; }
  std::string name() const override { return "continuous"; }
  double reward_scale() const override { return 10.0; }

  const ContinuousEnvOptions& options() const { return opts_; }

 private:
  ContinuousEnvOptions opts_;
};

std::shared_ptr<const ContinuousEnv> make_continuous_env(ContinuousEnvOptions opts = {});

/// Pr(A=1|s) = w1 * sigmoid(s1) + w2 * sigmoid(s2), with w1 + w2 = 1.
class SigmoidMixturePolicy final : public Policy {
 public:
  SigmoidMixturePolicy(double w1, double w2);

  int num_actions() const override { return 2; }
  double prob(const State& s, Action a) const override;
  std::string name() const override;

 private:
  double w1_;
  double w2_;
};

// ---------------------------------------------------------------------------
// Fifty binary components; the action only drives the first one.

class HighDimEnv final : public Environment {
 public:
  static constexpr std::size_t kDim = 50;

  explicit HighDimEnv(double initial_x1 = 0.5, double discount = 0.8);

  State initial_state(Rng& rng) const override;
  StepOutcome step(const State& s, Action a, Rng& rng) const override;
  int num_actions() const override { return 2; }
  std::size_t state_dim() const override { return kDim; }
  std::string name() const override { return "high-dim"; }
  double reward_scale() const override { return 2.0; }

 private:
  double initial_x1_;
};

std::shared_ptr<const HighDimEnv> make_high_dim_env(double discount = 0.8);

// ---------------------------------------------------------------------------

class UniformPolicy final : public Policy {
 public:
  explicit UniformPolicy(int num_actions);

  int num_actions() const override { return n_; }
  double prob(const State& s, Action a) const override;
  std::string name() const override { return "uniform"; }

 private:
  int n_;
};

/// weight * first + (1 - weight) * second.
class MixturePolicy final : public Policy {
 public:
  MixturePolicy(double weight, PolicyPtr first, PolicyPtr second);

  int num_actions() const override { return first_->num_actions(); }
  double prob(const State& s, Action a) const override;
  Action sample(const State& s, Rng& rng) const override;
  std::string name() const override;

  double weight() const { return weight_; }

 private:
  double weight_;
  PolicyPtr first_;
  PolicyPtr second_;
};

}  // namespace crl
