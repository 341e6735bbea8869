#include "crl/return_distribution.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace crl {

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace

ReturnDistribution ReturnDistribution::particles(std::vector<double> atoms) {
  if (atoms.empty()) throw std::invalid_argument("return distribution needs at least one atom");
  std::sort(atoms.begin(), atoms.end());
  ReturnDistribution d;
  d.kind_ = Kind::kParticles;
  d.data_ = std::make_shared<const Data>(Data{std::move(atoms), {}, {}});
  return d;
}

ReturnDistribution ReturnDistribution::weighted(std::vector<double> atoms,
                                                std::vector<double> weights) {
  if (atoms.empty()) throw std::invalid_argument("return distribution needs at least one atom");
  if (atoms.size() != weights.size()) throw std::invalid_argument("atoms/weights size mismatch");
  std::vector<std::size_t> order(atoms.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return atoms[i] < atoms[j]; });
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw std::invalid_argument("mixture weights must be nonnegative");
    total += w;
  }
  if (!(total > 0.0)) throw std::invalid_argument("mixture weights sum to zero");
  Data data;
  data.atoms.reserve(atoms.size());
  data.weights.reserve(atoms.size());
  data.cumulative.reserve(atoms.size());
  double acc = 0.0;
  for (std::size_t i : order) {
    data.atoms.push_back(atoms[i]);
    data.weights.push_back(weights[i] / total);
    acc += weights[i] / total;
    data.cumulative.push_back(acc);
  }
  data.cumulative.back() = 1.0;
  ReturnDistribution d;
  d.kind_ = Kind::kParticles;
  d.data_ = std::make_shared<const Data>(std::move(data));
  return d;
}

ReturnDistribution ReturnDistribution::kernel_density(std::vector<double> samples, double bandwidth) {
  if (samples.empty()) throw std::invalid_argument("kernel density needs at least one sample");
  if (!(bandwidth > 0.0)) throw std::invalid_argument("kernel bandwidth must be positive");
  std::sort(samples.begin(), samples.end());
  ReturnDistribution d;
  d.kind_ = Kind::kKernelDensity;
  d.data_ = std::make_shared<const Data>(Data{std::move(samples), {}, {}});
  d.bandwidth_ = bandwidth;
  return d;
}

double ReturnDistribution::mean() const {
  const auto& atoms = data_->atoms;
  const auto& weights = data_->weights;
  if (weights.empty()) {
    return std::accumulate(atoms.begin(), atoms.end(), 0.0) / static_cast<double>(atoms.size());
  }
  double m = 0.0;
  for (std::size_t i = 0; i < atoms.size(); ++i) m += weights[i] * atoms[i];
  return m;
}

double ReturnDistribution::cdf(double x) const {
  const auto& atoms = data_->atoms;
  if (kind_ == Kind::kKernelDensity) {
    double acc = 0.0;
    for (double a : atoms) acc += normal_cdf((x - a) / bandwidth_);
    return acc / static_cast<double>(atoms.size());
  }
  const auto it = std::upper_bound(atoms.begin(), atoms.end(), x);
  const auto count = static_cast<std::size_t>(it - atoms.begin());
  if (count == 0) return 0.0;
  if (data_->weights.empty()) return static_cast<double>(count) / static_cast<double>(atoms.size());
  return data_->cumulative[count - 1];
}

double ReturnDistribution::quantile(double p) const {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("quantile level must lie in [0, 1]");
  const auto& atoms = data_->atoms;
  if (kind_ == Kind::kKernelDensity) {
    if (p <= 0.0) return -INFINITY;
    if (p >= 1.0) return INFINITY;
    double lo = atoms.front() - 40.0 * bandwidth_;
    double hi = atoms.back() + 40.0 * bandwidth_;
    for (int it = 0; it < 200 && hi - lo > 1e-12 * std::max(1.0, std::abs(hi)); ++it) {
      const double mid = 0.5 * (lo + hi);
      if (cdf(mid) < p) lo = mid; else hi = mid;
    }
    return 0.5 * (lo + hi);
  }
  const std::size_t n = atoms.size();
  if (data_->weights.empty()) {
    // Smallest i with i/n >= p, guarded against rounding in p*n.
    auto i = static_cast<std::size_t>(std::ceil(p * static_cast<double>(n) - 1e-9));
    i = std::clamp<std::size_t>(i, 1, n);
    return atoms[i - 1];
  }
  const auto& cum = data_->cumulative;
  const auto it = std::lower_bound(cum.begin(), cum.end(), p - 1e-12);
  return atoms[std::min<std::size_t>(static_cast<std::size_t>(it - cum.begin()), n - 1)];
}

double ReturnDistribution::sample(Rng& rng) const {
  const auto& atoms = data_->atoms;
  const std::size_t n = atoms.size();
  if (kind_ == Kind::kKernelDensity) {
    const auto i = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    return atoms[i] + bandwidth_ * standard_normal(rng);
  }
  if (data_->weights.empty()) {
    return atoms[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)];
  }
  const auto& cum = data_->cumulative;
  const double u = uniform01(rng);
  const auto it = std::upper_bound(cum.begin(), cum.end(), u);
  return atoms[std::min<std::size_t>(static_cast<std::size_t>(it - cum.begin()), n - 1)];
}

double value_estimate(const ReturnDistribution& dist) {
  if (dist.size() == 0) throw std::invalid_argument("value of an empty distribution");
  return dist.mean();
}

double sample_return(const ReturnDistribution& dist, Rng& rng) { return dist.sample(rng); }

QuantileInterval drl_qr_interval(const ReturnDistribution& dist, int num_quantiles, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
  if (num_quantiles < 1) throw std::invalid_argument("num_quantiles must be >= 1");
  const int m = num_quantiles;
  QuantileInterval out;
  int lower = static_cast<int>(std::floor((m * alpha + 1.0) / 2.0 + 1e-12));
  if (lower < 1) {
    lower = 1;
    out.clipped = true;
  }
  const int upper = m + 1 - lower;
  out.lower_index = lower;
  out.upper_index = upper;
  if (dist.kind() == ReturnDistribution::Kind::kParticles && dist.equally_weighted() &&
      dist.size() == static_cast<std::size_t>(m)) {
    out.lower = dist.atoms()[lower - 1];
    out.upper = dist.atoms()[upper - 1];
    return out;
  }
  out.lower = dist.quantile((2.0 * lower - 1.0) / (2.0 * m));
  out.upper = dist.quantile((2.0 * upper - 1.0) / (2.0 * m));
  return out;
}

QuantileInterval equal_tailed_interval(const ReturnDistribution& dist, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
  QuantileInterval out;
  out.lower = dist.quantile(alpha / 2.0);
  out.upper = dist.quantile(1.0 - alpha / 2.0);
  return out;
}

}  // namespace crl
