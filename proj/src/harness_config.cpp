#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "crl/harness.hpp"

namespace crl {

Example parse_example(const std::string& s) {
  if (s == "two-state") return Example::kTwoState;
  if (s == "continuous") return Example::kContinuous;
  if (s == "mountain-car") return Example::kMountainCar;
  if (s == "high-dim") return Example::kHighDim;
  throw std::invalid_argument("unknown example '" + s +
                              "' (expected two-state, continuous, mountain-car or high-dim)");
}

Setting parse_setting(const std::string& s) {
  if (s == "on") return Setting::kOn;
  if (s == "off") return Setting::kOff;
  throw std::invalid_argument("unknown setting '" + s + "' (expected on or off)");
}

Baseline parse_baseline(const std::string& s) {
  if (s == "none") return Baseline::kNone;
  if (s == "drl-qr") return Baseline::kDrlQr;
  if (s == "kde-qr") return Baseline::kKdeQr;
  throw std::invalid_argument("unknown baseline '" + s + "' (expected drl-qr, kde-qr or none)");
}

std::string to_string(Example e) {
  switch (e) {
    case Example::kTwoState: return "two-state";
    case Example::kContinuous: return "continuous";
    case Example::kMountainCar: return "mountain-car";
    case Example::kHighDim: return "high-dim";
  }
  return "?";
}

std::string to_string(Setting s) { return s == Setting::kOn ? "on" : "off"; }

std::string to_string(Baseline b) {
  switch (b) {
    case Baseline::kNone: return "none";
    case Baseline::kDrlQr: return "drl-qr";
    case Baseline::kKdeQr: return "kde-qr";
  }
  return "?";
}

ExperimentConfig default_config(Example example, Setting setting) {
  ExperimentConfig c;
  c.example = example;
  c.setting = setting;
  switch (example) {
    case Example::kTwoState:
      break;
    case Example::kContinuous:
      c.N = 200;
      c.m = 30;
      c.B = 50;
      c.l = 200;
      c.rho = 1e-3;
      c.passes = 200;
      c.batch_size = 32;
      c.huber_kappa = 1.0;
      c.frozen_target = true;
      break;
    case Example::kMountainCar:
      c.N = 200;
      c.B = 50;
      c.l = 200;
      c.gamma = 0.99;
      c.horizon = 1500;
      c.baseline = Baseline::kKdeQr;
      break;
    case Example::kHighDim:
      c.B = 50;
      c.l = 200;
      c.rho = 0.05;
      c.passes = 50;
      c.batch_size = 32;
      c.huber_kappa = 1.0;
      c.frozen_target = true;
      c.ridge = 1e-3;
      break;
  }
  return c;
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("config: " + msg); };
  if (!(alpha > 0.0 && alpha < 1.0)) fail("alpha must lie in (0, 1)");
  if (!(gamma > 0.0 && gamma < 1.0)) fail("gamma must lie in (0, 1)");
  if (N < 2) fail("N must be >= 2");
  if (T < 2) fail("T must be >= 2");
  if (ks.empty()) fail("at least one k is required");
  for (int k : ks) {
    if (k < 1 || k > T - 1) fail("k must lie in [1, T-1]");
  }
  if (xis.empty()) fail("at least one xi is required");
  for (double xi : xis) {
    if (!(xi > 0.0 && xi <= 1.0)) fail("xi must lie in (0, 1]");
  }
  if (B < 1) fail("B must be >= 1");
  if (l < 1) fail("l must be >= 1");
  if (m < 1) fail("m must be >= 1");
  if (passes < 0) fail("passes must be >= 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (repetitions < 0) fail("reps must be >= 0");
  if (test_points < 1) fail("test_points must be >= 1");
  if (horizon < 1) fail("horizon must be >= 1");
  // Truncation: gamma^H must be negligible next to the return scale 1/(1-gamma).
  if (std::pow(gamma, horizon) > 1e-3 / (1.0 - gamma)) fail("horizon too short for gamma");
  if (!(behavior_mix >= 0.0 && behavior_mix <= 1.0)) fail("behavior_mix must lie in [0, 1]");
  if (!(target_mix >= 0.0 && target_mix <= 1.0)) fail("target_mix must lie in [0, 1]");
  if (rollout_cap < 1) fail("rollout_cap must be >= 1");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  std::istringstream is(text);
  T value{};
  is >> value;
  if (!is || !(is >> std::ws).eof()) {
    throw std::invalid_argument("config: bad value '" + text + "' for " + key);
  }
  return value;
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& text) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const std::string t = trim(item);
    if (t.empty()) continue;
    out.push_back(parse_number<T>(key, t));
  }
  if (out.empty()) throw std::invalid_argument("config: empty list for " + key);
  return out;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw std::invalid_argument("config: bad boolean '" + text + "' for " + key);
}

}  // namespace

void apply_config_value(ExperimentConfig& c, const std::string& key, const std::string& v) {
  if (key == "example") c.example = parse_example(v);
  else if (key == "setting") c.setting = parse_setting(v);
  else if (key == "N") c.N = parse_number<int>(key, v);
  else if (key == "T") c.T = parse_number<int>(key, v);
  else if (key == "split") c.split = parse_split_rule(v);
  else if (key == "gamma") c.gamma = parse_number<double>(key, v);
  else if (key == "k") c.ks = parse_list<int>(key, v);
  else if (key == "xi") c.xis = parse_list<double>(key, v);
  else if (key == "alpha") c.alpha = parse_number<double>(key, v);
  else if (key == "B") c.B = parse_number<int>(key, v);
  else if (key == "l") c.l = parse_number<int>(key, v);
  else if (key == "m") c.m = parse_number<int>(key, v);
  else if (key == "rho") c.rho = parse_number<double>(key, v);
  else if (key == "passes") c.passes = parse_number<int>(key, v);
  else if (key == "batch_size") c.batch_size = parse_number<int>(key, v);
  else if (key == "huber_kappa") c.huber_kappa = parse_number<double>(key, v);
  else if (key == "frozen_target") c.frozen_target = parse_bool(key, v);
  else if (key == "hidden") c.hidden = parse_number<int>(key, v);
  else if (key == "momentum") c.momentum = parse_number<double>(key, v);
  else if (key == "ridge") c.ridge = parse_number<double>(key, v);
  else if (key == "reps") c.repetitions = parse_number<int>(key, v);
  else if (key == "test_points") c.test_points = parse_number<int>(key, v);
  else if (key == "horizon") c.horizon = parse_number<int>(key, v);
  else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, v);
  else if (key == "baseline") c.baseline = parse_baseline(v);
  else if (key == "second_gain") c.second_gain = parse_number<double>(key, v);
  else if (key == "behavior_mix") c.behavior_mix = parse_number<double>(key, v);
  else if (key == "target_mix") c.target_mix = parse_number<double>(key, v);
  else if (key == "rollout_cap") c.rollout_cap = parse_number<int>(key, v);
  else if (key == "out") c.out_dir = v;
  else throw std::invalid_argument("config: unknown key '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> parse_config_text(std::istream& is) {
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
    }
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

void apply_config_text(ExperimentConfig& cfg, std::istream& is) {
  for (const auto& [k, v] : parse_config_text(is)) apply_config_value(cfg, k, v);
}

void apply_config_file(ExperimentConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  apply_config_text(cfg, in);
}

}  // namespace crl
