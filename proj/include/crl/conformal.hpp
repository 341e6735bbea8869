#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "crl/quantile_model.hpp"
#include "crl/replay.hpp"

namespace crl {

/// Draws with replacement, probability proportional to weight.
class WeightedSampler {
 public:
  explicit WeightedSampler(std::span<const double> weights);

  std::size_t operator()(Rng& rng) const;
  std::size_t size() const { return cumulative_.size(); }

 private:
  std::vector<double> cumulative_;
};

/// l independent indices drawn with probability proportional to `weights`.
std::vector<std::size_t> weighted_subsample(std::span<const double> weights, int l, Rng& rng);

struct ConformalQuantile {
  double radius = 0.0;
  /// 1-based order-statistic index ceil(l (1 - alpha xi)).
  std::size_t index = 0;
  /// Set when the index exceeds l; the radius is then +inf.
  bool infinite = false;
};

std::size_t conformal_rank(std::size_t l, double alpha, double xi);
ConformalQuantile conformal_quantile(std::span<const double> scores, double alpha, double xi);
/// Same, for scores already sorted ascending.
ConformalQuantile conformal_quantile_sorted(std::span<const double> sorted, double alpha, double xi);

struct Interval {
  double lower = 0.0;
  double upper = 0.0;

  bool contains(double g) const { return lower <= g && g <= upper; }
  bool infinite() const;
  double length() const { return upper - lower; }
  double center() const { return 0.5 * (lower + upper); }
};

Interval single_interval(double center, double radius);

/// 1-based rank of the aggregated radius among B sorted radii: the region keeps
/// points covered by at least max(1, ceil((1 - xi) B)) intervals, which is the
/// (floor(xi B) + 1)-th smallest radius, capped at B.
std::size_t aggregation_rank(std::size_t B, double xi);
double aggregate_radius(std::span<const double> radii, double xi);

struct PredictionRegion {
  double center = 0.0;
  std::vector<double> radii;
  double radius = 0.0;
  double alpha = 0.1;
  double xi = 0.8;
  int B = 0;
  int l = 0;

  Interval interval() const { return single_interval(center, radius); }
  bool infinite() const;
  bool contains(double g) const { return interval().contains(g); }
};

/// Aggregates B intervals sharing one center. Throws on mixed centers.
PredictionRegion aggregate(std::span<const Interval> intervals, double xi);

/// Scores of B calibration rounds, each sorted ascending.
struct CalibrationDraws {
  int l = 0;
  std::vector<std::vector<double>> sorted_scores;

  int rounds() const { return static_cast<int>(sorted_scores.size()); }
  std::vector<ConformalQuantile> round_quantiles(double alpha, double xi) const;
  /// Aggregated radius for this (alpha, xi); +inf if the selected round radius is infinite.
  double radius(double alpha, double xi) const;
  /// Region around `center` with the per-round radii and their aggregate.
  PredictionRegion region(double center, double alpha, double xi) const;
};

/// Weighted replay-buffer calibration. Per-segment quantities that do not
/// depend on the tail draw (head sum, tail distribution, v(S_t)) are cached.
class ConformalCalibrator {
 public:
  ConformalCalibrator(const ReplayBuffer& buffer, std::span<const double> weights,
                      const ReturnModel& model, double discount);

  /// B rounds of subsample -> pseudo-returns with fresh tail draws -> scores.
  CalibrationDraws draw(int B, int l, Rng& rng) const;
  std::size_t size() const { return head_.size(); }

 private:
  WeightedSampler sampler_;
  std::vector<double> head_;
  std::vector<double> value_;
  std::vector<ReturnDistribution> tail_;
  double tail_discount_;
};

struct ConformalConfig {
  double alpha = 0.1;
  double xi = 0.8;
  int B = 50;
  int l = 200;
};

/// Full loop for a single test state; deterministic given the rng state.
PredictionRegion predict(const ReplayBuffer& buffer, std::span<const double> weights,
                         const ReturnModel& model, const State& s_test,
                         const ConformalConfig& config, double discount, Rng& rng);

}  // namespace crl
