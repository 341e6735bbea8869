#include "crl/weights.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include <spdlog/spdlog.h>

namespace crl {

namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Eigen::MatrixXd design(std::span<const State> states) {
  if (states.empty()) return {};
  const auto d = static_cast<Eigen::Index>(states.front().size());
  Eigen::MatrixXd x(static_cast<Eigen::Index>(states.size()), d + 1);
  for (std::size_t i = 0; i < states.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = state_features(states[i]).transpose();
  }
  return x;
}

}  // namespace

Eigen::VectorXd state_features(const State& s) {
  Eigen::VectorXd row(static_cast<Eigen::Index>(s.size()) + 1);
  row(0) = 1.0;
  for (std::size_t d = 0; d < s.size(); ++d) row(static_cast<Eigen::Index>(d) + 1) = s[d];
  return row;
}

// --- logistic regression ---------------------------------------------------

LogisticRegression LogisticRegression::fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                           const Options& options) {
  if (x.rows() == 0) throw std::invalid_argument("logistic regression on an empty design");
  if (x.rows() != y.size()) throw std::invalid_argument("design/label size mismatch");
  const Eigen::Index p = x.cols();
  LogisticRegression out;
  out.beta_ = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd penalty = Eigen::VectorXd::Constant(p, options.ridge);
  penalty(0) = 0.0;

  for (int it = 0; it < options.max_iterations; ++it) {
    const Eigen::VectorXd eta = x * out.beta_;
    Eigen::VectorXd mu(eta.size());
    Eigen::VectorXd w(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      mu(i) = sigmoid(eta(i));
      w(i) = std::max(mu(i) * (1.0 - mu(i)), 1e-12);
    }
    const Eigen::VectorXd grad = x.transpose() * (y - mu) - penalty.cwiseProduct(out.beta_);
    Eigen::MatrixXd hess = x.transpose() * w.asDiagonal() * x;
    hess.diagonal() += penalty;
    hess.diagonal().array() += 1e-12;
    const Eigen::VectorXd delta = hess.ldlt().solve(grad);
    out.beta_ += delta;
    out.iterations_ = it + 1;
    if (!delta.allFinite()) break;
    if (delta.lpNorm<Eigen::Infinity>() < options.tolerance) {
      out.converged_ = true;
      break;
    }
  }
  return out;
}

double LogisticRegression::predict(const Eigen::VectorXd& row) const {
  return sigmoid(logit(row));
}

// --- on-policy weight ------------------------------------------------------

OnPolicyWeight OnPolicyWeight::identity(std::string reason) {
  OnPolicyWeight w;
  w.degenerate_ = true;
  w.diagnostic_ = std::move(reason);
  return w;
}

double OnPolicyWeight::operator()(const State& s) const {
  if (degenerate_) return 1.0;
  // Odds of the initial-state class; clamp the exponent to stay finite.
  return std::exp(std::clamp(classifier_.logit(state_features(s)), -700.0, 700.0));
}

OnPolicyWeight fit_onpolicy_weight(std::span<const State> initial_states,
                                   std::span<const State> all_states,
                                   const LogisticRegression::Options& options) {
  if (initial_states.empty() || all_states.empty()) {
    const std::string why = "weight classifier has a single class; using identity weights";
    spdlog::warn(why);
    return OnPolicyWeight::identity(why);
  }
  const Eigen::MatrixXd x1 = design(initial_states);
  const Eigen::MatrixXd x0 = design(all_states);
  if (x1.cols() != x0.cols()) throw std::invalid_argument("state dimension mismatch");
  Eigen::MatrixXd x(x1.rows() + x0.rows(), x1.cols());
  x << x1, x0;
  Eigen::VectorXd y(x.rows());
  y.head(x1.rows()).setOnes();
  y.tail(x0.rows()).setZero();

  // A design with no varying column carries no information about the label.
  bool varies = false;
  for (Eigen::Index c = 1; c < x.cols() && !varies; ++c) {
    varies = x.col(c).maxCoeff() > x.col(c).minCoeff();
  }
  if (!varies) {
    const std::string why = "weight classifier features are constant; using identity weights";
    spdlog::warn(why);
    return OnPolicyWeight::identity(why);
  }

  OnPolicyWeight w;
  w.classifier_ = LogisticRegression::fit(x, y, options);
  w.degenerate_ = false;
  if (!w.classifier_.coefficients().allFinite()) {
    const std::string why = "weight classifier diverged; using identity weights";
    spdlog::warn(why);
    return OnPolicyWeight::identity(why);
  }
  if (!w.classifier_.converged()) {
    w.diagnostic_ = "weight classifier stopped after " +
                    std::to_string(w.classifier_.iterations()) + " iterations";
    spdlog::debug(w.diagnostic_);
  }
  return w;
}

// --- behavior-policy estimates ---------------------------------------------

FrequencyPolicyEstimate::FrequencyPolicyEstimate(std::span<const Transition> data, int num_actions,
                                                 int num_cells, Indexer indexer, double floor)
    : num_actions_(num_actions),
      num_cells_(num_cells),
      indexer_(std::move(indexer)),
      floor_(floor),
      counts_(static_cast<std::size_t>(num_actions) * static_cast<std::size_t>(num_cells), 0) {
  if (num_actions < 1 || num_cells < 1) throw std::invalid_argument("empty frequency table");
  if (!(floor > 0.0 && floor * num_actions <= 1.0)) {
    throw std::invalid_argument("behavior floor must lie in (0, 1/|A|]");
  }
  for (const Transition& tr : data) {
    const int c = indexer_(tr.s);
    if (c < 0 || c >= num_cells_) throw std::out_of_range("state indexer out of range");
    check_action(tr.a);
    ++counts_[static_cast<std::size_t>(c * num_actions_ + tr.a)];
  }
}

int FrequencyPolicyEstimate::count(int cell, Action a) const {
  return counts_[static_cast<std::size_t>(cell * num_actions_ + a)];
}

double FrequencyPolicyEstimate::prob(const State& s, Action a) const {
  check_action(a);
  const int c = indexer_(s);
  if (c < 0 || c >= num_cells_) throw std::out_of_range("state indexer out of range");
  int total = 0;
  for (Action b = 0; b < num_actions_; ++b) total += count(c, b);
  const double p = (count(c, a) + 1.0) / (total + static_cast<double>(num_actions_));
  return std::clamp(p, floor_, 1.0);
}

LogisticPolicyEstimate::LogisticPolicyEstimate(std::span<const Transition> data, double floor,
                                               const LogisticRegression::Options& options)
    : floor_(floor) {
  if (data.empty()) throw std::invalid_argument("behavior estimate needs data");
  if (!(floor > 0.0 && floor <= 0.5)) throw std::invalid_argument("behavior floor must lie in (0, 0.5]");
  const auto d = static_cast<Eigen::Index>(data.front().s.size());
  Eigen::MatrixXd x(static_cast<Eigen::Index>(data.size()), d + 1);
  Eigen::VectorXd y(x.rows());
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i].a != 0 && data[i].a != 1) throw std::invalid_argument("logistic estimate needs binary actions");
    x.row(static_cast<Eigen::Index>(i)) = state_features(data[i].s).transpose();
    y(static_cast<Eigen::Index>(i)) = data[i].a;
  }
  model_ = LogisticRegression::fit(x, y, options);
}

double LogisticPolicyEstimate::prob(const State& s, Action a) const {
  check_action(a);
  const double p1 = std::clamp(model_.predict(state_features(s)), floor_, 1.0 - floor_);
  return a == 1 ? p1 : 1.0 - p1;
}

// --- segment weights -------------------------------------------------------

double offpolicy_weight(const Segment& seg, const OnPolicyWeight& w_on, const Policy& target,
                        const Policy& behavior_estimate) {
  double w = w_on(seg.first());
  for (int h = 0; h < seg.k(); ++h) {
    const State& s = seg.states[static_cast<std::size_t>(h)];
    const Action a = seg.actions[static_cast<std::size_t>(h)];
    w *= target.prob(s, a) / behavior_estimate.prob(s, a);
  }
  return w;
}

std::vector<double> onpolicy_buffer_weights(const ReplayBuffer& buffer, const OnPolicyWeight& w_on) {
  std::vector<double> out;
  out.reserve(buffer.size());
  for (const Segment& seg : buffer.segments) out.push_back(w_on(seg.first()));
  return out;
}

std::vector<double> offpolicy_buffer_weights(const ReplayBuffer& buffer,
                                             const OnPolicyWeight& w_on, const Policy& target,
                                             const Policy& behavior_estimate) {
  std::vector<double> out;
  out.reserve(buffer.size());
  for (const Segment& seg : buffer.segments) {
    out.push_back(offpolicy_weight(seg, w_on, target, behavior_estimate));
  }
  return out;
}

NormalizedWeights normalize_weights(std::span<const double> raw, double cap) {
  const std::size_t n = raw.size();
  if (n == 0) throw std::invalid_argument("normalize_weights: empty weight vector");
  double total = 0.0;
  std::size_t positive = 0;
  for (double w : raw) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("weights must be finite and nonnegative");
    total += w;
    positive += w > 0.0;
  }
  if (!(total > 0.0)) throw std::invalid_argument("normalize_weights: all weights are zero");

  NormalizedWeights out;
  const double nd = static_cast<double>(n);
  out.scale = nd / total;
  // Mean 1 is unreachable under the cap when too few weights are positive.
  if (cap > 0.0 && cap * static_cast<double>(positive) > nd) {
    std::vector<double> sorted(raw.begin(), raw.end());
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    // Find j clipped weights such that c = (n - j*cap) / sum(rest) is consistent.
    double rest = total;
    for (std::size_t j = 0; j < n; ++j) {
      const double c = (nd - static_cast<double>(j) * cap) / rest;
      const bool below = c * sorted[j] <= cap;
      const bool above = j == 0 || c * sorted[j - 1] >= cap;
      if (below && above) {
        out.scale = c;
        break;
      }
      rest -= sorted[j];
    }
  }
  out.weights.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double w = out.scale * raw[i];
    if (cap > 0.0 && w >= cap) {
      if (w > cap) ++out.cap_hits;
      w = cap;
    }
    out.weights[i] = w;
  }
  return out;
}

WeightSummary summarize_weights(const NormalizedWeights& w) {
  WeightSummary s;
  s.count = w.weights.size();
  s.cap_hits = w.cap_hits;
  if (w.weights.empty()) return s;
  const auto [lo, hi] = std::minmax_element(w.weights.begin(), w.weights.end());
  s.min = *lo;
  s.max = *hi;
  double sum = 0.0;
  double sq = 0.0;
  for (double x : w.weights) {
    sum += x;
    sq += x * x;
  }
  s.mean = sum / static_cast<double>(s.count);
  s.ess = sq > 0.0 ? sum * sum / sq : 0.0;
  return s;
}

void write_weight_summary_header(std::ostream& os) {
  os << "label,count,min,max,mean,ess,cap_hits\n";
}

void write_weight_summary_row(std::ostream& os, const std::string& label, const WeightSummary& s) {
  os << label << ',' << s.count << ',' << s.min << ',' << s.max << ',' << s.mean << ',' << s.ess
     << ',' << s.cap_hits << '\n';
}

}  // namespace crl
