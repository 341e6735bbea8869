#include "crl/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace crl {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_levels(double alpha, double xi) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
  if (!(xi > 0.0 && xi <= 1.0)) throw std::invalid_argument("xi must lie in (0, 1]");
}

}  // namespace

WeightedSampler::WeightedSampler(std::span<const double> weights) {
  if (weights.empty()) throw std::invalid_argument("weighted sampling from an empty set");
  cumulative_.reserve(weights.size());
  double acc = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("weights must be finite and nonnegative");
    acc += w;
    cumulative_.push_back(acc);
  }
  if (!(acc > 0.0)) throw std::invalid_argument("weighted sampling with all-zero weights");
}

std::size_t WeightedSampler::operator()(Rng& rng) const {
  const double u = uniform01(rng) * cumulative_.back();
  const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  return std::min<std::size_t>(static_cast<std::size_t>(it - cumulative_.begin()),
                               cumulative_.size() - 1);
}

std::vector<std::size_t> weighted_subsample(std::span<const double> weights, int l, Rng& rng) {
  if (l < 1) throw std::invalid_argument("subsample size l must be >= 1");
  const WeightedSampler sampler(weights);
  std::vector<std::size_t> out(static_cast<std::size_t>(l));
  for (auto& i : out) i = sampler(rng);
  return out;
}

std::size_t conformal_rank(std::size_t l, double alpha, double xi) {
  check_levels(alpha, xi);
  // The epsilon keeps exact products such as 200 * 0.92 from rounding up.
  return static_cast<std::size_t>(std::ceil(static_cast<double>(l) * (1.0 - alpha * xi) - 1e-9));
}

ConformalQuantile conformal_quantile_sorted(std::span<const double> sorted, double alpha, double xi) {
  if (sorted.empty()) throw std::invalid_argument("conformal quantile of no scores");
  ConformalQuantile q;
  q.index = std::max<std::size_t>(conformal_rank(sorted.size(), alpha, xi), 1);
  if (q.index > sorted.size()) {
    q.infinite = true;
    q.radius = kInf;
  } else {
    q.radius = sorted[q.index - 1];
  }
  return q;
}

ConformalQuantile conformal_quantile(std::span<const double> scores, double alpha, double xi) {
  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end());
  return conformal_quantile_sorted(sorted, alpha, xi);
}

bool Interval::infinite() const { return std::isinf(lower) || std::isinf(upper); }

Interval single_interval(double center, double radius) {
  if (!(radius >= 0.0)) throw std::invalid_argument("interval radius must be nonnegative");
  if (std::isinf(radius)) return {-kInf, kInf};
  return {center - radius, center + radius};
}

std::size_t aggregation_rank(std::size_t B, double xi) {
  if (B == 0) throw std::invalid_argument("aggregation needs at least one interval");
  if (!(xi > 0.0 && xi <= 1.0)) throw std::invalid_argument("xi must lie in (0, 1]");
  const auto below = static_cast<std::size_t>(std::floor(xi * static_cast<double>(B) + 1e-9));
  return std::min(below + 1, B);
}

double aggregate_radius(std::span<const double> radii, double xi) {
  std::vector<double> sorted(radii.begin(), radii.end());
  const std::size_t r = aggregation_rank(sorted.size(), xi);
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(r - 1), sorted.end());
  return sorted[r - 1];
}

bool PredictionRegion::infinite() const { return std::isinf(radius); }

PredictionRegion aggregate(std::span<const Interval> intervals, double xi) {
  if (intervals.empty()) throw std::invalid_argument("aggregation needs at least one interval");
  PredictionRegion region;
  region.xi = xi;
  region.B = static_cast<int>(intervals.size());
  bool have_center = false;
  for (const Interval& iv : intervals) {
    if (iv.infinite()) {
      region.radii.push_back(kInf);
      continue;
    }
    const double c = iv.center();
    if (!have_center) {
      region.center = c;
      have_center = true;
    } else if (std::abs(c - region.center) > 1e-9 * std::max(1.0, std::abs(c))) {
      throw std::invalid_argument("aggregate: intervals have different centers");
    }
    region.radii.push_back(0.5 * iv.length());
  }
  region.radius = aggregate_radius(region.radii, xi);
  return region;
}

std::vector<ConformalQuantile> CalibrationDraws::round_quantiles(double alpha, double xi) const {
  std::vector<ConformalQuantile> out;
  out.reserve(sorted_scores.size());
  for (const auto& s : sorted_scores) out.push_back(conformal_quantile_sorted(s, alpha, xi));
  return out;
}

double CalibrationDraws::radius(double alpha, double xi) const {
  std::vector<double> radii;
  for (const auto& q : round_quantiles(alpha, xi)) radii.push_back(q.radius);
  return aggregate_radius(radii, xi);
}

PredictionRegion CalibrationDraws::region(double center, double alpha, double xi) const {
  PredictionRegion r;
  r.center = center;
  r.alpha = alpha;
  r.xi = xi;
  r.B = rounds();
  r.l = l;
  for (const auto& q : round_quantiles(alpha, xi)) r.radii.push_back(q.radius);
  r.radius = aggregate_radius(r.radii, xi);
  return r;
}

ConformalCalibrator::ConformalCalibrator(const ReplayBuffer& buffer, std::span<const double> weights,
                                         const ReturnModel& model, double discount)
    : sampler_(weights), tail_discount_(std::pow(discount, buffer.k)) {
  if (weights.size() != buffer.size()) throw std::invalid_argument("one weight per segment required");
  head_.reserve(buffer.size());
  value_.reserve(buffer.size());
  tail_.reserve(buffer.size());
  for (const Segment& seg : buffer.segments) {
    if (seg.k() != buffer.k) throw std::invalid_argument("segment length differs from buffer k");
    head_.push_back(head_return(seg, discount));
    value_.push_back(model.value(seg.first()));
    tail_.push_back(model.distribution(seg.last()));
  }
}

CalibrationDraws ConformalCalibrator::draw(int B, int l, Rng& rng) const {
  if (B < 1) throw std::invalid_argument("number of rounds B must be >= 1");
  if (l < 1) throw std::invalid_argument("subsample size l must be >= 1");
  CalibrationDraws out;
  out.l = l;
  out.sorted_scores.resize(static_cast<std::size_t>(B));
  for (auto& scores : out.sorted_scores) {
    scores.resize(static_cast<std::size_t>(l));
    for (double& v : scores) {
      const std::size_t i = sampler_(rng);
      const double g = head_[i] + tail_discount_ * tail_[i].sample(rng);
      v = std::abs(g - value_[i]);
    }
    std::sort(scores.begin(), scores.end());
  }
  return out;
}

PredictionRegion predict(const ReplayBuffer& buffer, std::span<const double> weights,
                         const ReturnModel& model, const State& s_test,
                         const ConformalConfig& config, double discount, Rng& rng) {
  const ConformalCalibrator calibrator(buffer, weights, model, discount);
  const CalibrationDraws draws = calibrator.draw(config.B, config.l, rng);
  return draws.region(model.value(s_test), config.alpha, config.xi);
}

}  // namespace crl
