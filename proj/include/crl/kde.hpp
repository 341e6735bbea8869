#pragma once

#include <optional>
#include <span>
#include <vector>

#include "crl/quantile_model.hpp"

namespace crl {

inline constexpr double kBandwidthFloor = 1e-6;

/// Silverman's rule 0.9 * min(sd, IQR/1.34) * n^(-1/5), floored at `floor`.
double silverman_bandwidth(std::span<const double> samples, double floor = kBandwidthFloor);

/// Gaussian kernel density over Monte Carlo returns.
ReturnDistribution kde_return_estimator(std::vector<double> returns,
                                        double floor = kBandwidthFloor);

/// Uniform grid over a two-dimensional box; out-of-box states are clamped.
struct GridBucketing {
  double lo0 = -1.2;
  double hi0 = 0.6;
  double lo1 = -0.07;
  double hi1 = 0.07;
  int cells0 = 8;
  int cells1 = 8;

  int size() const { return cells0 * cells1; }
  int bucket(const State& s) const;
};

/// Per-bucket kernel density of returns, falling back to the pooled density
/// for buckets with fewer than `min_samples` returns.
class KdeReturnModel final : public ReturnModel {
 public:
  KdeReturnModel(std::span<const State> states, std::span<const double> returns,
                 GridBucketing grid, int min_samples = 2);

  ReturnDistribution distribution(const State& s) const override;
  /// True when `s` falls in a bucket served by the pooled fallback.
  bool uses_fallback(const State& s) const;
  int populated_buckets() const;

 private:
  GridBucketing grid_;
  std::vector<std::optional<ReturnDistribution>> buckets_;
  ReturnDistribution global_;
};

}  // namespace crl
