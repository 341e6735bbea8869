#include "crl/harness.hpp"

#include <cmath>
#include <stdexcept>

#include <spdlog/spdlog.h>

#include "crl/kde.hpp"
#include "crl/mountain_car.hpp"
#include "crl/quantile_model.hpp"

namespace crl {

Metrics compute_metrics(const std::vector<Interval>& regions, const std::vector<double>& returns) {
  if (regions.size() != returns.size()) {
    throw std::invalid_argument("compute_metrics: regions and returns differ in length");
  }
  Metrics m;
  if (regions.empty()) return m;
  int covered = 0;
  int finite = 0;
  double total_length = 0.0;
  for (std::size_t i = 0; i < regions.size(); ++i) {
    if (regions[i].infinite()) {
      ++m.inf_regions;
      ++covered;
      continue;
    }
    covered += regions[i].contains(returns[i]);
    total_length += regions[i].length();
    ++finite;
  }
  m.coverage = static_cast<double>(covered) / static_cast<double>(regions.size());
  if (finite > 0) m.avg_length = total_length / finite;
  return m;
}

double oracle_return(const Environment& env, const Policy& policy, const State& s, double gamma,
                     int horizon, Rng& rng) {
  if (horizon < 1) throw std::invalid_argument("oracle horizon must be >= 1");
  double g = 0.0;
  double discount = 1.0;
  State cur = s;
  for (int t = 0; t < horizon; ++t) {
    if (env.absorbing(cur)) break;
    const Action a = policy.sample(cur, rng);
    StepOutcome out = env.step(cur, a, rng);
    g += discount * out.reward;
    discount *= gamma;
    cur = std::move(out.next);
  }
  return g;
}

namespace {

// Stream indices under each repetition seed.
enum Stream : std::uint64_t {
  kData = 1,
  kSplit,
  kTrain,
  kTest,
  kOracle,
  kModel,
  kCalibrate = 100,
};

struct Problem {
  EnvironmentPtr env;
  PolicyPtr behavior;
  PolicyPtr target;
  std::shared_ptr<const MountainCarEnv> mountain_car;
};

Problem make_problem(const ExperimentConfig& cfg) {
  Problem p;
  const bool off = cfg.setting == Setting::kOff;
  switch (cfg.example) {
    case Example::kTwoState:
    case Example::kHighDim: {
      if (cfg.example == Example::kTwoState) {
        p.env = std::make_shared<TwoStateEnv>(0.5, cfg.gamma);
      } else {
        p.env = std::make_shared<HighDimEnv>(0.5, cfg.gamma);
      }
      p.behavior = std::make_shared<SwitchPolicy>(0.4, 0.8);
      p.target = off ? std::make_shared<SwitchPolicy>(0.5, 0.7) : p.behavior;
      break;
    }
    case Example::kContinuous: {
      ContinuousEnvOptions opts;
      opts.second_gain = cfg.second_gain;
      opts.discount = cfg.gamma;
      p.env = make_continuous_env(opts);
      p.behavior = std::make_shared<SigmoidMixturePolicy>(0.5, 0.5);
      p.target = off ? std::make_shared<SigmoidMixturePolicy>(0.6, 0.4) : p.behavior;
      break;
    }
    case Example::kMountainCar: {
      if (std::abs(cfg.gamma - 0.99) > 1e-12) {
        throw std::invalid_argument("mountain-car uses gamma = 0.99");
      }
      p.mountain_car = make_mountain_car_env();
      p.env = p.mountain_car;
      QLearningConfig qcfg;
      Rng rng(derive_seed(cfg.seed, 0x51a7));
      const QPolicyFit fit = fit_q_policy(*p.mountain_car, qcfg, rng);
      spdlog::info("greedy Q policy: {:.0f}% validation successes, {:.1f} mean steps to goal",
                   fit.validation_success_rate * 100.0, fit.mean_steps_to_goal);
      auto uniform = std::make_shared<UniformPolicy>(3);
      p.behavior = std::make_shared<MixturePolicy>(cfg.behavior_mix, fit.policy, uniform);
      p.target = off ? std::make_shared<MixturePolicy>(cfg.target_mix, fit.policy, uniform)
                     : p.behavior;
      break;
    }
  }
  return p;
}

std::shared_ptr<const ReturnModel> fit_quantile_model(const ExperimentConfig& cfg, const Problem& p,
                                                      std::span<const Transition> train, Rng& rng) {
  const bool off = cfg.setting == Setting::kOff;
  QtdHyper hyper{cfg.gamma, cfg.rho, cfg.huber_kappa};
  std::unique_ptr<QuantileModel> model;
  switch (cfg.example) {
    case Example::kTwoState:
      model = std::make_unique<TabularQuantileModel>(2, cfg.m, off ? 2 : 1, hyper);
      break;
    case Example::kHighDim:
      model = std::make_unique<LinearQuantileModel>(p.env->state_dim(), cfg.m, off ? 2 : 1, hyper,
                                                    cfg.ridge);
      break;
    case Example::kContinuous:
      // Per-action outputs in both settings, marginalized under the target policy.
      model = std::make_unique<MlpQuantileModel>(p.env->state_dim(), cfg.hidden, cfg.m, 2, hyper,
                                                 cfg.momentum, rng);
      break;
    case Example::kMountainCar:
      throw std::logic_error("mountain-car uses the kernel density model");
  }
  TrainConfig tc;
  tc.passes = cfg.passes;
  tc.batch_size = cfg.batch_size;
  tc.frozen_target = cfg.frozen_target;
  train_qtd(*model, train, p.target.get(), tc, rng);
  return std::make_shared<TargetReturnModel>(std::shared_ptr<const QuantileModel>(std::move(model)),
                                             p.target);
}

std::shared_ptr<const ReturnModel> fit_kde_model(const ExperimentConfig& cfg, const Problem& p,
                                                 std::span<const Transition> train, Rng& rng) {
  std::vector<State> states;
  std::vector<double> returns;
  states.reserve(train.size());
  returns.reserve(train.size());
  // Only the logging policy can be rolled out, so the density is biased off-policy.
  for (const Transition& tr : train) {
    states.push_back(tr.s);
    returns.push_back(oracle_return(*p.env, *p.behavior, tr.s, cfg.gamma, cfg.rollout_cap, rng));
  }
  return std::make_shared<KdeReturnModel>(states, returns, GridBucketing{});
}

std::shared_ptr<const Policy> fit_behavior_estimate(const ExperimentConfig& cfg,
                                                    std::span<const Transition> train) {
  switch (cfg.example) {
    case Example::kTwoState:
      return std::make_shared<FrequencyPolicyEstimate>(train, 2, 2,
                                                       [](const State& s) { return s.index(); });
    case Example::kMountainCar: {
      const GridBucketing grid;
      return std::make_shared<FrequencyPolicyEstimate>(
          train, 3, grid.size(), [grid](const State& s) { return grid.bucket(s); });
    }
    case Example::kContinuous:
    case Example::kHighDim:
      return std::make_shared<LogisticPolicyEstimate>(train);
  }
  return nullptr;
}

Interval baseline_interval(const ExperimentConfig& cfg, const ReturnDistribution& dist) {
  const QuantileInterval q = cfg.baseline == Baseline::kKdeQr
                                 ? equal_tailed_interval(dist, cfg.alpha)
                                 : drl_qr_interval(dist, cfg.m, cfg.alpha);
  return {q.lower, q.upper};
}

void run_repetition(const ExperimentConfig& cfg, const Problem& p, int rep, ExperimentResult& out) {
  const std::uint64_t seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(rep));
  const bool off = cfg.setting == Setting::kOff;

  Rng data_rng(derive_seed(seed, kData));
  std::vector<Trajectory> trajectories;
  trajectories.reserve(static_cast<std::size_t>(cfg.N));
  for (int i = 0; i < cfg.N; ++i) {
    trajectories.push_back(sample_trajectory(*p.env, *p.behavior, cfg.T, data_rng, i));
  }

  // The partition is a function of the split stream only, so every k sees the
  // same training side.
  auto split_for = [&](int k) {
    Rng split_rng(derive_seed(seed, kSplit));
    DataSplit s = build_buffers(trajectories, k, cfg.split, split_rng);
    s.calibration.setting = to_string(cfg.setting);
    s.calibration.behavior_policy = p.behavior->name();
    s.calibration.target_policy = p.target->name();
    return s;
  };
  const DataSplit base = split_for(cfg.ks.front());

  Rng train_rng(derive_seed(seed, kTrain));
  const auto model = cfg.example == Example::kMountainCar
                         ? fit_kde_model(cfg, p, base.train, train_rng)
                         : fit_quantile_model(cfg, p, base.train, train_rng);

  std::vector<State> all_states;
  all_states.reserve(base.train.size());
  for (const Transition& tr : base.train) all_states.push_back(tr.s);
  const OnPolicyWeight w_on = fit_onpolicy_weight(base.train_initial_states, all_states);
  const auto bhat = off ? fit_behavior_estimate(cfg, base.train) : nullptr;

  Rng test_rng(derive_seed(seed, kTest));
  Rng oracle_rng(derive_seed(seed, kOracle));
  std::vector<State> tests;
  std::vector<double> returns;
  std::vector<double> centers;
  std::vector<Interval> baseline;
  for (int j = 0; j < cfg.test_points; ++j) {
    tests.push_back(p.env->initial_state(test_rng));
    returns.push_back(oracle_return(*p.env, *p.target, tests.back(), cfg.gamma, cfg.horizon, oracle_rng));
    const ReturnDistribution dist = model->distribution(tests.back());
    centers.push_back(dist.mean());
    if (cfg.baseline != Baseline::kNone) baseline.push_back(baseline_interval(cfg, dist));
  }

  auto record = [&](std::string method, std::optional<int> k, std::optional<double> xi,
                    const Metrics& m) {
    MetricsRecord r;
    r.example = to_string(cfg.example);
    r.setting = to_string(cfg.setting);
    r.method = std::move(method);
    r.k = k;
    r.xi = xi;
    r.rep = rep;
    r.coverage = m.coverage;
    r.avg_length = m.avg_length;
    r.inf_regions = m.inf_regions;
    r.seed = seed;
    return r;
  };

  std::vector<MetricsRecord> rows;
  for (std::size_t ki = 0; ki < cfg.ks.size(); ++ki) {
    const int k = cfg.ks[ki];
    const DataSplit split = ki == 0 ? base : split_for(k);
    const ReplayBuffer& buffer = split.calibration;
    const std::vector<double> raw = off ? offpolicy_buffer_weights(buffer, w_on, *p.target, *bhat)
                                        : onpolicy_buffer_weights(buffer, w_on);
    const NormalizedWeights weights = normalize_weights(raw);
    out.weights.push_back({rep, k, summarize_weights(weights)});

    const ConformalCalibrator calibrator(buffer, weights.weights, *model, cfg.gamma);
    Rng cal_rng(derive_seed(seed, kCalibrate + static_cast<std::uint64_t>(k)));
    const CalibrationDraws draws = calibrator.draw(cfg.B, cfg.l, cal_rng);
    for (double xi : cfg.xis) {
      const double radius = draws.radius(cfg.alpha, xi);
      std::vector<Interval> regions;
      regions.reserve(centers.size());
      for (double c : centers) regions.push_back(single_interval(c, radius));
      rows.push_back(record("conformal", k, xi, compute_metrics(regions, returns)));
    }
  }
  if (cfg.baseline != Baseline::kNone) {
    rows.push_back(record(to_string(cfg.baseline), std::nullopt, std::nullopt,
                          compute_metrics(baseline, returns)));
  }
  out.records.insert(out.records.end(), rows.begin(), rows.end());
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentResult out;
  if (cfg.repetitions == 0) return out;
  const Problem problem = make_problem(cfg);
  for (int rep = 0; rep < cfg.repetitions; ++rep) {
    try {
      run_repetition(cfg, problem, rep, out);
    } catch (const std::exception& e) {
      ++out.failed_repetitions;
      spdlog::error("repetition {} of {} {} failed: {}", rep, to_string(cfg.example),
                    to_string(cfg.setting), e.what());
    }
  }
  return out;
}

}  // namespace crl
