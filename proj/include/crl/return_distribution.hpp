#pragma once

#include <memory>
#include <span>
#include <vector>

#include "crl/random.hpp"

namespace crl {

/// Estimated return distribution at one state: either a (possibly weighted)
/// mixture of Dirac atoms, or a Gaussian kernel density over samples.
/// Immutable; copies share storage.
class ReturnDistribution {
 public:
  enum class Kind { kParticles, kKernelDensity };

  /// Equally weighted atoms; sorted on construction.
  static ReturnDistribution particles(std::vector<double> atoms);
  /// Atoms with explicit nonnegative weights (normalized internally).
  static ReturnDistribution weighted(std::vector<double> atoms, std::vector<double> weights);
  static ReturnDistribution kernel_density(std::vector<double> samples, double bandwidth);

  Kind kind() const { return kind_; }
  bool equally_weighted() const { return data_->weights.empty(); }
  std::span<const double> atoms() const { return data_->atoms; }
  std::span<const double> weights() const { return data_->weights; }
  double bandwidth() const { return bandwidth_; }
  std::size_t size() const { return data_->atoms.size(); }

  double mean() const;
  double cdf(double x) const;
  /// Left-continuous inverse CDF: smallest x with F(x) >= p.
  double quantile(double p) const;
  double sample(Rng& rng) const;

 private:
  struct Data {
    std::vector<double> atoms;
    std::vector<double> weights;  // empty => equal weights
    std::vector<double> cumulative;
  };

  Kind kind_ = Kind::kParticles;
  std::shared_ptr<const Data> data_;
  double bandwidth_ = 0.0;
};

double value_estimate(const ReturnDistribution& dist);
double sample_return(const ReturnDistribution& dist, Rng& rng);

struct QuantileInterval {
  double lower = 0.0;
  double upper = 0.0;
  int lower_index = 0;  // 1-based order statistics
  int upper_index = 0;
  /// Set when alpha is too small for m and the full particle range was returned.
  bool clipped = false;
};

/// DRL-QR interval between the L-th and U-th particles, L = floor((m*alpha + 1)/2), U = m+1-L.
/// For weighted mixtures the mixture quantiles at (2L-1)/(2m) and (2U-1)/(2m) are used.
QuantileInterval drl_qr_interval(const ReturnDistribution& dist, int num_quantiles, double alpha);

/// Equal-tailed interval [Q(alpha/2), Q(1-alpha/2)] of any distribution.
QuantileInterval equal_tailed_interval(const ReturnDistribution& dist, double alpha);

}  // namespace crl
