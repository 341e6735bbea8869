#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "crl/conformal.hpp"
#include "crl/env.hpp"
#include "crl/replay.hpp"
#include "crl/weights.hpp"

namespace crl {

enum class Example { kTwoState, kContinuous, kMountainCar, kHighDim };
enum class Setting { kOn, kOff };
enum class Baseline { kNone, kDrlQr, kKdeQr };

Example parse_example(const std::string& s);
Setting parse_setting(const std::string& s);
Baseline parse_baseline(const std::string& s);
std::string to_string(Example e);
std::string to_string(Setting s);
std::string to_string(Baseline b);

struct ExperimentConfig {
  Example example = Example::kTwoState;
  Setting setting = Setting::kOn;

  // Data.
  int N = 400;
  int T = 30;
  SplitRule split = SplitRule::kTrajectory;
  double gamma = 0.8;

  // Calibration; every k shares one trained model per repetition and every
  // xi shares the calibration draws of its k.
  std::vector<int> ks{2};
  std::vector<double> xis{0.8};
  double alpha = 0.1;
  int B = 100;
  int l = 400;

  // Return model.
  int m = 20;
  double rho = 0.1;
  int passes = 50;
  int batch_size = 1;
  double huber_kappa = 0.0;
  bool frozen_target = false;
  int hidden = 32;
  double momentum = 0.9;
  double ridge = 1e-3;

  // Evaluation.
  int repetitions = 50;
  int test_points = 310;
  int horizon = 100;
  std::uint64_t seed = 20240601;
  Baseline baseline = Baseline::kDrlQr;

  // Environment knobs.
  double second_gain = 0.75;
  double behavior_mix = 0.3;
  double target_mix = 0.2;
  int rollout_cap = 1000;

  std::string out_dir = "out";

  void validate() const;
};

/// Per-example defaults for a setting.
ExperimentConfig default_config(Example example, Setting setting);

/// Applies flat `key = value` overrides ('#' starts a comment). Lists are
/// comma-separated. Throws on unknown keys or malformed values.
std::vector<std::pair<std::string, std::string>> parse_config_text(std::istream& is);
void apply_config_text(ExperimentConfig& cfg, std::istream& is);
void apply_config_file(ExperimentConfig& cfg, const std::string& path);
void apply_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value);

struct MetricsRecord {
  std::string example;
  std::string setting;
  std::string method;
  std::optional<int> k;
  std::optional<double> xi;
  int rep = 0;
  double coverage = 0.0;
  /// Mean length over finite regions; empty when every region is infinite.
  std::optional<double> avg_length;
  int inf_regions = 0;
  std::uint64_t seed = 0;
};

struct Metrics {
  double coverage = 0.0;
  std::optional<double> avg_length;
  int inf_regions = 0;
};

/// Coverage counts infinite regions as covering; lengths average finite regions only.
Metrics compute_metrics(const std::vector<Interval>& regions, const std::vector<double>& returns);

/// One Monte Carlo return sum_{t<H} gamma^t R_t from `s` under `policy`.
double oracle_return(const Environment& env, const Policy& policy, const State& s, double gamma,
                     int horizon, Rng& rng);

struct WeightDiagnostics {
  int rep = 0;
  int k = 0;
  WeightSummary summary;
};

struct ExperimentResult {
  std::vector<MetricsRecord> records;
  std::vector<WeightDiagnostics> weights;
  int failed_repetitions = 0;
};

ExperimentResult run_experiment(const ExperimentConfig& cfg);

void emit_csv(const std::vector<MetricsRecord>& records, std::ostream& os);
void emit_csv(const std::vector<MetricsRecord>& records, const std::string& path);
void emit_weights_csv(const std::vector<WeightDiagnostics>& rows, const std::string& path);

enum class PlotMetric { kCoverage, kLength };

struct BoxStats {
  std::string label;
  std::size_t count = 0;
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;
  double whisker_low = 0.0;
  double whisker_high = 0.0;
};

/// Quartiles by linear interpolation; whiskers at the most extreme points within 1.5 IQR.
BoxStats box_stats(std::vector<double> values, std::string label);
/// One box per (method, k) group, plus xi when several xi values are present.
std::vector<BoxStats> group_boxes(const std::vector<MetricsRecord>& records, PlotMetric metric);
void emit_boxplot_svg(const std::vector<MetricsRecord>& records, PlotMetric metric, double alpha,
                      std::ostream& os);
void emit_boxplot_svg(const std::vector<MetricsRecord>& records, PlotMetric metric, double alpha,
                      const std::string& path);

}  // namespace crl
