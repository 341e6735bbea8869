#pragma once

#include <memory>
#include <vector>

#include "crl/env.hpp"

namespace crl {

/// Classic-control Mountain Car. Actions: 0 push left, 1 no push, 2 push right.
/// Reward is -1 per step until the goal; goal states are absorbing with reward 0.
class MountainCarEnv final : public Environment {
 public:
  static constexpr double kMinPosition = -1.2;
  static constexpr double kMaxPosition = 0.6;
  static constexpr double kMaxSpeed = 0.07;
  static constexpr double kGoalPosition = 0.5;
  static constexpr double kForce = 0.001;
  static constexpr double kGravity = 0.0025;

  MountainCarEnv();

  /// Start position uniform in [-0.6, -0.4], zero velocity.
  State initial_state(Rng& rng) const override;
  StepOutcome step(const State& s, Action a, Rng& rng) const override;
  StepOutcome step(const State& s, Action a) const;
  int num_actions() const override { return 3; }
  std::size_t state_dim() const override { return 2; }
  std::string name() const override { return "mountain-car"; }
  double reward_scale() const override { return 1.0; }
  bool absorbing(const State& s) const override { return at_goal(s); }

  static bool at_goal(const State& s) { return s[0] >= kGoalPosition; }
};

std::shared_ptr<const MountainCarEnv> make_mountain_car_env();

/// Gaussian radial-basis features on the normalized (position, velocity) box.
class RbfFeatures {
 public:
  struct Config {
    std::vector<double> scales{5.0, 2.0, 1.0, 0.5};
    int centers_per_scale = 100;
  };

  RbfFeatures(const Config& config, Rng& rng);

  std::size_t size() const { return centers_.size() + 1; }
  /// Feature vector with a trailing bias term.
  std::vector<double> operator()(const State& s) const;

 private:
  struct Center {
    double pos;
    double vel;
    double scale;
  };
  std::vector<Center> centers_;
};

/// Deterministic greedy policy over a linear Q-function on RBF features.
class GreedyQPolicy final : public Policy {
 public:
  GreedyQPolicy(std::shared_ptr<const RbfFeatures> features, std::vector<std::vector<double>> weights);

  int num_actions() const override { return static_cast<int>(weights_.size()); }
  double prob(const State& s, Action a) const override;
  Action sample(const State& s, Rng& rng) const override;
  std::string name() const override { return "greedy-q"; }

  Action greedy(const State& s) const;
  std::vector<double> q_values(const State& s) const;

 private:
  std::shared_ptr<const RbfFeatures> features_;
  std::vector<std::vector<double>> weights_;
};

struct QLearningConfig {
  RbfFeatures::Config rbf;
  int episodes = 300;
  int max_episode_steps = 1000;
  double learning_rate = 0.05;
  double discount = 0.99;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  double epsilon_decay = 0.97;
  int validation_rollouts = 100;
  int validation_step_budget = 400;
  double required_success_rate = 0.95;
};

struct QPolicyFit {
  std::shared_ptr<const GreedyQPolicy> policy;
  double validation_success_rate = 0.0;
  double mean_steps_to_goal = 0.0;
};

/// Q-learning with RBF features. Throws std::runtime_error if the greedy policy
/// fails the validation-rollout gate.
QPolicyFit fit_q_policy(const MountainCarEnv& env, const QLearningConfig& config, Rng& rng);

/// Fraction of rollouts from the start distribution reaching the goal within `budget` steps.
double goal_success_rate(const MountainCarEnv& env, const Policy& policy, int rollouts, int budget,
                         Rng& rng, double* mean_steps = nullptr);

}  // namespace crl
