// Command-line front end: `run` one configuration or `sweep` over k or xi.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "crl/harness.hpp"

namespace {

struct Flags {
  std::string example = "two-state";
  std::string setting = "on";
  std::optional<int> k;
  std::optional<double> xi;
  std::optional<int> B;
  std::optional<int> l;
  std::optional<double> alpha;
  std::optional<int> reps;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> baseline;
  std::string out = "out";
  std::string config;
  std::string param;
  std::string values;
  bool verbose = false;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--example", f.example, "two-state | continuous | mountain-car | high-dim")
      ->check(CLI::IsMember({"two-state", "continuous", "mountain-car", "high-dim"}));
  cmd->add_option("--setting", f.setting, "on | off")->check(CLI::IsMember({"on", "off"}));
  cmd->add_option("--xi", f.xi, "multiple-subsampling parameter");
  cmd->add_option("--B", f.B, "number of aggregated intervals");
  cmd->add_option("--l", f.l, "subsample size per interval");
  cmd->add_option("--alpha", f.alpha, "miscoverage level");
  cmd->add_option("--reps", f.reps, "repetitions");
  cmd->add_option("--seed", f.seed, "base seed");
  cmd->add_option("--baseline", f.baseline, "drl-qr | kde-qr | none")
      ->check(CLI::IsMember({"drl-qr", "kde-qr", "none"}));
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--config", f.config, "flat key = value file; its values override flags");
  cmd->add_flag("-v,--verbose", f.verbose, "debug logging");
}

crl::ExperimentConfig build_config(const Flags& f) {
  std::vector<std::pair<std::string, std::string>> file_entries;
  if (!f.config.empty()) {
    std::ifstream in(f.config);
    if (!in) throw std::runtime_error("cannot open config file " + f.config);
    file_entries = crl::parse_config_text(in);
  }
  std::string example = f.example;
  std::string setting = f.setting;
  for (const auto& [key, value] : file_entries) {
    if (key == "example") example = value;
    if (key == "setting") setting = value;
  }
  crl::ExperimentConfig cfg =
      crl::default_config(crl::parse_example(example), crl::parse_setting(setting));
  if (f.k) cfg.ks = {*f.k};
  if (f.xi) cfg.xis = {*f.xi};
  if (f.B) cfg.B = *f.B;
  if (f.l) cfg.l = *f.l;
  if (f.alpha) cfg.alpha = *f.alpha;
  if (f.reps) cfg.repetitions = *f.reps;
  if (f.seed) cfg.seed = *f.seed;
  if (f.baseline) cfg.baseline = crl::parse_baseline(*f.baseline);
  cfg.out_dir = f.out;
  for (const auto& [key, value] : file_entries) crl::apply_config_value(cfg, key, value);
  return cfg;
}

void print_summary(const std::vector<crl::MetricsRecord>& records) {
  struct Acc {
    int n = 0;
    double cov = 0.0;
    double len = 0.0;
    int len_n = 0;
  };
  std::map<std::tuple<std::string, int, double>, Acc> groups;
  for (const auto& r : records) {
    auto& a = groups[{r.method, r.k.value_or(0), r.xi.value_or(0.0)}];
    ++a.n;
    a.cov += r.coverage;
    if (r.avg_length) {
      a.len += *r.avg_length;
      ++a.len_n;
    }
  }
  std::cout << "method       k   xi     reps  mean_cov  mean_len\n";
  for (const auto& [key, a] : groups) {
    const auto& [method, k, xi] = key;
    std::printf("%-10s %3s %5s %6d %9.4f %9.4f\n", method.c_str(),
                k ? std::to_string(k).c_str() : "-", xi > 0 ? std::to_string(xi).substr(0, 4).c_str() : "-",
                a.n, a.cov / a.n, a.len_n ? a.len / a.len_n : std::nan(""));
  }
}

int execute(const crl::ExperimentConfig& cfg) {
  cfg.validate();
  std::filesystem::create_directories(cfg.out_dir);
  const crl::ExperimentResult result = crl::run_experiment(cfg);
  const auto dir = std::filesystem::path(cfg.out_dir);
  crl::emit_csv(result.records, (dir / "metrics.csv").string());
  crl::emit_weights_csv(result.weights, (dir / "weights.csv").string());
  if (!result.records.empty()) {
    crl::emit_boxplot_svg(result.records, crl::PlotMetric::kCoverage, cfg.alpha,
                          (dir / "boxplot_cov.svg").string());
    crl::emit_boxplot_svg(result.records, crl::PlotMetric::kLength, cfg.alpha,
                          (dir / "boxplot_len.svg").string());
  }
  print_summary(result.records);
  if (result.failed_repetitions > 0) {
    spdlog::error("{} of {} repetitions failed", result.failed_repetitions, cfg.repetitions);
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conformal prediction intervals for infinite-horizon returns"};
  app.require_subcommand(1);
  Flags flags;

  CLI::App* run = app.add_subcommand("run", "run one configuration");
  add_common(run, flags);
  run->add_option("--k", flags.k, "pseudo-return rollout length");

  CLI::App* sweep = app.add_subcommand("sweep", "sweep k or xi over a list");
  add_common(sweep, flags);
  sweep->add_option("--k", flags.k, "rollout length when sweeping xi");
  sweep->add_option("--param", flags.param, "k | xi")->required()->check(CLI::IsMember({"k", "xi"}));
  sweep->add_option("--values", flags.values, "comma-separated values")->required();

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(flags.verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    crl::ExperimentConfig cfg = build_config(flags);
    if (sweep->parsed()) crl::apply_config_value(cfg, flags.param, flags.values);
    return execute(cfg);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 2;
  }
}
