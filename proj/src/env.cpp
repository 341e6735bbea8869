#include "crl/env.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace crl {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check_probability(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw std::invalid_argument(std::string(what) + " must lie in [0, 1]");
  }
}

}  // namespace

Action Policy::sample(const State& s, Rng& rng) const {
  const double u = uniform01(rng);
  double acc = 0.0;
  const int n = num_actions();
  for (Action a = 0; a < n - 1; ++a) {
    acc += prob(s, a);
    if (u < acc) return a;
  }
  return n - 1;
}

void Policy::check_action(Action a) const {
  if (a < 0 || a >= num_actions()) {
    throw std::out_of_range("action " + std::to_string(a) + " outside action set of " + name());
  }
}

double policy_prob(const Policy& policy, const State& s, Action a) { return policy.prob(s, a); }

Environment::Environment(double discount) : discount_(discount) {
  if (!(discount > 0.0 && discount < 1.0)) {
    throw std::invalid_argument("discount must lie in (0, 1)");
  }
}

Trajectory rollout_from(const Environment& env, const Policy& policy, const State& start,
                        int horizon, Rng& rng, int trajectory_id) {
  if (horizon < 1) throw std::invalid_argument("trajectory horizon must be >= 1");
  Trajectory traj;
  traj.id = trajectory_id;
  traj.steps.reserve(static_cast<std::size_t>(horizon));
  State s = start;
  for (int t = 0; t < horizon; ++t) {
    const Action a = policy.sample(s, rng);
    StepOutcome out = env.step(s, a, rng);
    Transition tr{s, a, out.reward, out.next, t, trajectory_id};
    s = std::move(out.next);
    traj.steps.push_back(std::move(tr));
  }
  return traj;
}

Trajectory sample_trajectory(const Environment& env, const Policy& policy, int horizon, Rng& rng,
                             int trajectory_id) {
  if (horizon < 1) throw std::invalid_argument("trajectory horizon must be >= 1");
  const State start = env.initial_state(rng);
  return rollout_from(env, policy, start, horizon, rng, trajectory_id);
}

Trajectory sample_trajectory(const Environment& env, const Policy& policy, int horizon,
                             std::uint64_t seed, int trajectory_id) {
  Rng rng(seed);
  return sample_trajectory(env, policy, horizon, rng, trajectory_id);
}

// --- two-state chain -------------------------------------------------------

TwoStateEnv::TwoStateEnv(double initial_x1, double discount)
    : Environment(discount), initial_x1_(initial_x1) {
  check_probability(initial_x1, "initial probability of x1");
}

State TwoStateEnv::initial_state(Rng& rng) const {
  return State{uniform01(rng) < initial_x1_ ? 0.0 : 1.0};
}

StepOutcome TwoStateEnv::step(const State& s, Action a, Rng& rng) const {
  const int idx = s.index();
  const double mean = idx == 0 ? kRewardMeanX1 : kRewardMeanX2;
  const double reward = mean + standard_normal(rng);
  const int next = a == 1 ? 1 - idx : idx;
  return {reward, State{static_cast<double>(next)}};
}

SwitchPolicy::SwitchPolicy(double p12, double p21) : p12_(p12), p21_(p21) {
  check_probability(p12, "p12");
  check_probability(p21, "p21");
}

double SwitchPolicy::prob(const State& s, Action a) const {
  check_action(a);
  const double p_switch = s.index() == 0 ? p12_ : p21_;
  return a == 1 ? p_switch : 1.0 - p_switch;
}

std::string SwitchPolicy::name() const {
  std::ostringstream os;
  os << "switch(" << p12_ << "," << p21_ << ")";
  return os.str();
}

FoldedChain make_two_state_env(double p12, double p21, double discount) {
  return {std::make_shared<TwoStateEnv>(0.5, discount), std::make_shared<SwitchPolicy>(p12, p21)};
}

// --- continuous ------------------------------------------------------------

ContinuousEnv::ContinuousEnv(ContinuousEnvOptions opts) : Environment(opts.discount), opts_(opts) {}

State ContinuousEnv::initial_state(Rng& rng) const {
  const double s1 = standard_normal(rng);
  const double s2 = standard_normal(rng);
  return State{s1, s2};
}

StepOutcome ContinuousEnv::step_with_noise(const State& s, Action a, double z1, double z2) const {
  const double sign = 2.0 * a - 1.0;
  const double n1 = 0.75 * sign * s[0] + z1;
  const double n2 = -opts_.second_gain * sign * s[1] + z2;
  const double reward = 2.0 * n1 + n2 - sign / 4.0;
  return {reward, State{n1, n2}};
}

StepOutcome ContinuousEnv::step(const State& s, Action a, Rng& rng) const {
  const double z1 = opts_.noise_sd * standard_normal(rng);
  const double z2 = opts_.noise_sd * standard_normal(rng);
  return step_with_noise(s, a, z1, z2);
}

std::shared_ptr<const ContinuousEnv> make_continuous_env(ContinuousEnvOptions opts) {
  return std::make_shared<ContinuousEnv>(opts);
}

SigmoidMixturePolicy::SigmoidMixturePolicy(double w1, double w2) : w1_(w1), w2_(w2) {
  check_probability(w1, "sigmoid mixture weight");
  check_probability(w2, "sigmoid mixture weight");
  if (std::abs(w1 + w2 - 1.0) > 1e-12) {
    throw std::invalid_argument("sigmoid mixture weights must sum to 1");
  }
}

double SigmoidMixturePolicy::prob(const State& s, Action a) const {
  check_action(a);
  const double p1 = w1_ * sigmoid(s[0]) + w2_ * sigmoid(s[1]);
  return a == 1 ? p1 : 1.0 - p1;
}

std::string SigmoidMixturePolicy::name() const {
  std::ostringstream os;
  os << "sigmoid-mix(" << w1_ << "," << w2_ << ")";
  return os.str();
}

// --- high-dimensional ------------------------------------------------------

HighDimEnv::HighDimEnv(double initial_x1, double discount)
    : Environment(discount), initial_x1_(initial_x1) {
  check_probability(initial_x1, "initial probability of x1");
}

State HighDimEnv::initial_state(Rng& rng) const {
  std::vector<double> f(kDim);
  f[0] = uniform01(rng) < initial_x1_ ? 0.0 : 1.0;
  for (std::size_t j = 1; j < kDim; ++j) f[j] = uniform01(rng) < 0.5 ? 0.0 : 1.0;
  return State{std::move(f)};
}

StepOutcome HighDimEnv::step(const State& s, Action a, Rng& rng) const {
  const int first = s.index();
  const double mean = first == 0 ? TwoStateEnv::kRewardMeanX1 : TwoStateEnv::kRewardMeanX2;
  const double reward = mean + standard_normal(rng);
  std::vector<double> f(kDim);
  f[0] = a == 1 ? 1.0 - first : first;
  for (std::size_t j = 1; j < kDim; ++j) f[j] = uniform01(rng) < 0.5 ? 0.0 : 1.0;
  return {reward, State{std::move(f)}};
}

std::shared_ptr<const HighDimEnv> make_high_dim_env(double discount) {
  return std::make_shared<HighDimEnv>(0.5, discount);
}

// --- generic policies ------------------------------------------------------

UniformPolicy::UniformPolicy(int num_actions) : n_(num_actions) {
  if (num_actions < 1) throw std::invalid_argument("uniform policy needs >= 1 action");
}

double UniformPolicy::prob(const State&, Action a) const {
  check_action(a);
  return 1.0 / n_;
}

MixturePolicy::MixturePolicy(double weight, PolicyPtr first, PolicyPtr second)
    : weight_(weight), first_(std::move(first)), second_(std::move(second)) {
  check_probability(weight, "mixture weight");
  if (!first_ || !second_) throw std::invalid_argument("mixture components must be non-null");
  if (first_->num_actions() != second_->num_actions()) {
    throw std::invalid_argument("mixture components disagree on the action set");
  }
}

double MixturePolicy::prob(const State& s, Action a) const {
  check_action(a);
  return weight_ * first_->prob(s, a) + (1.0 - weight_) * second_->prob(s, a);
}

Action MixturePolicy::sample(const State& s, Rng& rng) const {
  return uniform01(rng) < weight_ ? first_->sample(s, rng) : second_->sample(s, rng);
}

std::string MixturePolicy::name() const {
  std::ostringstream os;
  os << weight_ << "*" << first_->name() << "+" << (1.0 - weight_) << "*" << second_->name();
  return os.str();
}

}  // namespace crl
