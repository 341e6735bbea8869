#include "crl/mountain_car.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace crl {

MountainCarEnv::MountainCarEnv() : Environment(0.99) {}

State MountainCarEnv::initial_state(Rng& rng) const {
  return State{std::uniform_real_distribution<double>(-0.6, -0.4)(rng), 0.0};
}

StepOutcome MountainCarEnv::step(const State& s, Action a) const {
  if (a < 0 || a > 2) throw std::out_of_range("mountain car action must be 0, 1 or 2");
  if (at_goal(s)) return {0.0, s};
  double pos = s[0];
  double vel = s[1];
  vel += (a - 1) * kForce - kGravity * std::cos(3.0 * pos);
  vel = std::clamp(vel, -kMaxSpeed, kMaxSpeed);
  pos += vel;
  pos = std::clamp(pos, kMinPosition, kMaxPosition);
  if (pos == kMinPosition && vel < 0.0) vel = 0.0;
  return {-1.0, State{pos, vel}};
}

StepOutcome MountainCarEnv::step(const State& s, Action a, Rng&) const { return step(s, a); }

std::shared_ptr<const MountainCarEnv> make_mountain_car_env() {
  return std::make_shared<MountainCarEnv>();
}

// --- features --------------------------------------------------------------

namespace {

constexpr double kPosMean = 0.5 * (MountainCarEnv::kMinPosition + MountainCarEnv::kMaxPosition);
// Standard deviation of a uniform variable over the box.
const double kPosSd = (MountainCarEnv::kMaxPosition - MountainCarEnv::kMinPosition) / std::sqrt(12.0);
const double kVelSd = 2.0 * MountainCarEnv::kMaxSpeed / std::sqrt(12.0);

}  // namespace

RbfFeatures::RbfFeatures(const Config& config, Rng& rng) {
  if (config.scales.empty() || config.centers_per_scale < 1) {
    throw std::invalid_argument("RBF features need at least one scale and one center");
  }
  std::uniform_real_distribution<double> upos(MountainCarEnv::kMinPosition,
                                              MountainCarEnv::kMaxPosition);
  std::uniform_real_distribution<double> uvel(-MountainCarEnv::kMaxSpeed, MountainCarEnv::kMaxSpeed);
  for (double scale : config.scales) {
    for (int c = 0; c < config.centers_per_scale; ++c) {
      const double p = (upos(rng) - kPosMean) / kPosSd;
      const double v = uvel(rng) / kVelSd;
      centers_.push_back({p, v, scale});
    }
  }
}

std::vector<double> RbfFeatures::operator()(const State& s) const {
  const double p = (s[0] - kPosMean) / kPosSd;
  const double v = s[1] / kVelSd;
  std::vector<double> phi(size());
  for (std::size_t j = 0; j < centers_.size(); ++j) {
    const double dp = p - centers_[j].pos;
    const double dv = v - centers_[j].vel;
    phi[j] = std::exp(-centers_[j].scale * (dp * dp + dv * dv));
  }
  phi.back() = 1.0;
  return phi;
}

// --- greedy policy ---------------------------------------------------------

GreedyQPolicy::GreedyQPolicy(std::shared_ptr<const RbfFeatures> features,
                             std::vector<std::vector<double>> weights)
    : features_(std::move(features)), weights_(std::move(weights)) {}

std::vector<double> GreedyQPolicy::q_values(const State& s) const {
  const std::vector<double> phi = (*features_)(s);
  std::vector<double> q(weights_.size());
  for (std::size_t a = 0; a < weights_.size(); ++a) {
    q[a] = std::inner_product(phi.begin(), phi.end(), weights_[a].begin(), 0.0);
  }
  return q;
}

Action GreedyQPolicy::greedy(const State& s) const {
  const std::vector<double> q = q_values(s);
  return static_cast<Action>(std::max_element(q.begin(), q.end()) - q.begin());
}

double GreedyQPolicy::prob(const State& s, Action a) const {
  check_action(a);
  return greedy(s) == a ? 1.0 : 0.0;
}

Action GreedyQPolicy::sample(const State& s, Rng&) const { return greedy(s); }

// --- Q-learning ------------------------------------------------------------

double goal_success_rate(const MountainCarEnv& env, const Policy& policy, int rollouts, int budget,
                         Rng& rng, double* mean_steps) {
  int successes = 0;
  double steps_total = 0.0;
  for (int i = 0; i < rollouts; ++i) {
    State s = env.initial_state(rng);
    int t = 0;
    while (t < budget && !MountainCarEnv::at_goal(s)) {
      s = env.step(s, policy.sample(s, rng)).next;
      ++t;
    }
    if (MountainCarEnv::at_goal(s)) {
      ++successes;
      steps_total += t;
    }
  }
  if (mean_steps) *mean_steps = successes > 0 ? steps_total / successes : 0.0;
  return rollouts > 0 ? static_cast<double>(successes) / rollouts : 0.0;
}

QPolicyFit fit_q_policy(const MountainCarEnv& env, const QLearningConfig& config, Rng& rng) {
  auto features = std::make_shared<const RbfFeatures>(config.rbf, rng);
  const std::size_t dim = features->size();
  std::vector<std::vector<double>> w(3, std::vector<double>(dim, 0.0));

  auto q = [&](const std::vector<double>& phi, int a) {
    return std::inner_product(phi.begin(), phi.end(), w[a].begin(), 0.0);
  };

  double epsilon = config.epsilon_start;
  for (int ep = 0; ep < config.episodes; ++ep) {
    State s = env.initial_state(rng);
    std::vector<double> phi = (*features)(s);
    double phi_sq = std::inner_product(phi.begin(), phi.end(), phi.begin(), 0.0);
    for (int t = 0; t < config.max_episode_steps; ++t) {
      Action a;
      if (uniform01(rng) < epsilon) {
        a = std::uniform_int_distribution<int>(0, 2)(rng);
      } else {
        a = 0;
        for (int b = 1; b < 3; ++b) {
          if (q(phi, b) > q(phi, a)) a = b;
        }
      }
      const StepOutcome out = env.step(s, a);
      const bool done = MountainCarEnv::at_goal(out.next);
      std::vector<double> phi_next = (*features)(out.next);
      double target = out.reward;
      if (!done) {
        target += config.discount * std::max({q(phi_next, 0), q(phi_next, 1), q(phi_next, 2)});
      }
      // Normalized step keeps the update scale independent of feature overlap.
      const double delta = (target - q(phi, a)) * config.learning_rate / phi_sq;
      for (std::size_t j = 0; j < dim; ++j) w[a][j] += delta * phi[j];
      if (done) break;
      s = out.next;
      phi = std::move(phi_next);
      phi_sq = std::inner_product(phi.begin(), phi.end(), phi.begin(), 0.0);
    }
    epsilon = std::max(config.epsilon_end, epsilon * config.epsilon_decay);
  }

  QPolicyFit fit;
  fit.policy = std::make_shared<const GreedyQPolicy>(features, std::move(w));
  fit.validation_success_rate = goal_success_rate(env, *fit.policy, config.validation_rollouts,
                                                  config.validation_step_budget, rng,
                                                  &fit.mean_steps_to_goal);
  if (fit.validation_success_rate < config.required_success_rate) {
    throw std::runtime_error("Q-learning policy reached the goal in only " +
                             std::to_string(fit.validation_success_rate * 100.0) +
                             "% of validation rollouts");
  }
  return fit;
}

}  // namespace crl
