#pragma once

#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "crl/env.hpp"
#include "crl/replay.hpp"

namespace crl {

/// Design row [1, s_1, ..., s_d].
Eigen::VectorXd state_features(const State& s);

/// Binary logistic regression fit by iteratively reweighted least squares.
/// The ridge penalty applies to every coefficient except the intercept.
class LogisticRegression {
 public:
  struct Options {
    double ridge = 1e-6;
    double tolerance = 1e-8;
    int max_iterations = 100;
  };

  /// `x` rows are design vectors including the intercept column; `y` in {0, 1}.
  static LogisticRegression fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                const Options& options);
  static LogisticRegression fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
    return fit(x, y, Options{});
  }

  double logit(const Eigen::VectorXd& row) const { return beta_.dot(row); }
  double predict(const Eigen::VectorXd& row) const;
  const Eigen::VectorXd& coefficients() const { return beta_; }
  bool converged() const { return converged_; }
  int iterations() const { return iterations_; }

 private:
  Eigen::VectorXd beta_;
  bool converged_ = false;
  int iterations_ = 0;
};

/// State density ratio dP0/dP_cal estimated by classifier odds
/// P(delta = 1 | s) / P(delta = 0 | s), where delta = 1 marks initial states.
/// Unnormalized; buffer normalization happens in normalize_weights.
class OnPolicyWeight {
 public:
  static OnPolicyWeight identity(std::string reason = {});

  double operator()(const State& s) const;
  bool degenerate() const { return degenerate_; }
  const std::string& diagnostic() const { return diagnostic_; }
  const LogisticRegression& classifier() const { return classifier_; }

 private:
  friend OnPolicyWeight fit_onpolicy_weight(std::span<const State>, std::span<const State>,
                                            const LogisticRegression::Options&);
  LogisticRegression classifier_;
  bool degenerate_ = true;
  std::string diagnostic_;
};

/// Falls back to identity weights (with a logged warning) when either class is
/// empty or the design is constant across the two samples.
OnPolicyWeight fit_onpolicy_weight(std::span<const State> initial_states,
                                   std::span<const State> all_states,
                                   const LogisticRegression::Options& options = {});

inline constexpr double kBehaviorFloor = 0.01;

/// Laplace-smoothed (s, a) frequency table over a discretization of the state space.
class FrequencyPolicyEstimate final : public Policy {
 public:
  using Indexer = std::function<int(const State&)>;

  FrequencyPolicyEstimate(std::span<const Transition> data, int num_actions, int num_cells,
                          Indexer indexer, double floor = kBehaviorFloor);

  int num_actions() const override { return num_actions_; }
  /// (n(s, a) + 1) / (n(s) + |A|), clamped to [floor, 1].
  double prob(const State& s, Action a) const override;
  std::string name() const override { return "frequency-estimate"; }

  int count(int cell, Action a) const;

 private:
  int num_actions_;
  int num_cells_;
  Indexer indexer_;
  double floor_;
  std::vector<int> counts_;  // cell-major
};

/// Logistic model of Pr(A = 1 | s) for binary actions, clamped to [floor, 1 - floor].
class LogisticPolicyEstimate final : public Policy {
 public:
  explicit LogisticPolicyEstimate(std::span<const Transition> data,
                                  double floor = kBehaviorFloor,
                                  const LogisticRegression::Options& options = {});

  int num_actions() const override { return 2; }
  double prob(const State& s, Action a) const override;
  std::string name() const override { return "logistic-estimate"; }

 private:
  LogisticRegression model_;
  double floor_;
};

/// w_on(s_0) * prod_h pi(a_h | s_h) / bhat(a_h | s_h), before normalization and clipping.
double offpolicy_weight(const Segment& seg, const OnPolicyWeight& w_on, const Policy& target,
                        const Policy& behavior_estimate);

/// w_on at each segment's first state.
std::vector<double> onpolicy_buffer_weights(const ReplayBuffer& buffer, const OnPolicyWeight& w_on);
std::vector<double> offpolicy_buffer_weights(const ReplayBuffer& buffer,
                                             const OnPolicyWeight& w_on, const Policy& target,
                                             const Policy& behavior_estimate);

inline constexpr double kWeightCap = 50.0;

struct NormalizedWeights {
  std::vector<double> weights;
  /// Multiplier applied to the raw weights before clipping.
  double scale = 1.0;
  int cap_hits = 0;
};

/// Scales raw weights by the constant c for which min(c * w, cap) has buffer mean 1,
/// then clips at cap. Without a cap (cap <= 0) this is plain mean normalization.
NormalizedWeights normalize_weights(std::span<const double> raw, double cap = kWeightCap);

struct WeightSummary {
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
  /// Kish effective sample size (sum w)^2 / sum w^2.
  double ess = 0.0;
  int cap_hits = 0;
  std::size_t count = 0;
};

WeightSummary summarize_weights(const NormalizedWeights& w);
void write_weight_summary_header(std::ostream& os);
void write_weight_summary_row(std::ostream& os, const std::string& label, const WeightSummary& s);

}  // namespace crl
