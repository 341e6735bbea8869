#include "crl/kde.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace crl {

namespace {

double sorted_quantile(const std::vector<double>& sorted, double p) {
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

double silverman_bandwidth(std::span<const double> samples, double floor) {
  const std::size_t n = samples.size();
  if (n == 0) throw std::invalid_argument("bandwidth of an empty sample");
  if (n == 1) return floor;
  const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double x : samples) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const double iqr = sorted_quantile(sorted, 0.75) - sorted_quantile(sorted, 0.25);
  double spread = std::min(sd, iqr / 1.34);
  if (!(spread > 0.0)) spread = sd;
  const double h = 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
  return std::max(h, floor);
}

ReturnDistribution kde_return_estimator(std::vector<double> returns, double floor) {
  const double h = silverman_bandwidth(returns, floor);
  return ReturnDistribution::kernel_density(std::move(returns), h);
}

int GridBucketing::bucket(const State& s) const {
  auto cell = [](double x, double lo, double hi, int n) {
    const int c = static_cast<int>(std::floor((x - lo) / (hi - lo) * n));
    return std::clamp(c, 0, n - 1);
  };
  return cell(s[0], lo0, hi0, cells0) * cells1 + cell(s[1], lo1, hi1, cells1);
}

KdeReturnModel::KdeReturnModel(std::span<const State> states, std::span<const double> returns,
                               GridBucketing grid, int min_samples)
    : grid_(grid),
      buckets_(static_cast<std::size_t>(grid.size())),
      global_(kde_return_estimator({returns.begin(), returns.end()})) {
  if (states.size() != returns.size()) throw std::invalid_argument("states/returns size mismatch");
  std::vector<std::vector<double>> grouped(buckets_.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    grouped[static_cast<std::size_t>(grid_.bucket(states[i]))].push_back(returns[i]);
  }
  for (std::size_t b = 0; b < grouped.size(); ++b) {
    if (static_cast<int>(grouped[b].size()) >= min_samples) {
      buckets_[b] = kde_return_estimator(std::move(grouped[b]));
    }
  }
}

ReturnDistribution KdeReturnModel::distribution(const State& s) const {
  const auto& b = buckets_[static_cast<std::size_t>(grid_.bucket(s))];
  return b ? *b : global_;
}

bool KdeReturnModel::uses_fallback(const State& s) const {
  return !buckets_[static_cast<std::size_t>(grid_.bucket(s))].has_value();
}

int KdeReturnModel::populated_buckets() const {
  return static_cast<int>(std::count_if(buckets_.begin(), buckets_.end(),
                                        [](const auto& b) { return b.has_value(); }));
}

}  // namespace crl
