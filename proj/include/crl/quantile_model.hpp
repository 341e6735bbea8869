#pragma once

#include <iosfwd>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "crl/env.hpp"
#include "crl/return_distribution.hpp"

namespace crl {

enum class Backend { kTabular, kLinear, kMlp };

std::string to_string(Backend b);

/// Step-size, discount and loss settings shared by every backend.
struct QtdHyper {
  double discount = 0.8;
  double step = 0.1;
  /// 0 selects the plain quantile loss; > 0 the Huber quantile loss.
  double huber_kappa = 0.0;
};

/// Ascent direction in particle space for one (state, action) sample.
struct ParticleGradient {
  const State* state = nullptr;
  Action action = 0;
  std::vector<double> direction;
};

/// m quantile particles per state (num_actions == 1) or per state-action pair,
/// targeting levels tau_i = (2i - 1) / (2m).
class QuantileModel {
 public:
  QuantileModel(int num_quantiles, int num_actions, QtdHyper hyper);
  virtual ~QuantileModel() = default;

  int num_quantiles() const { return m_; }
  int num_actions() const { return num_actions_; }
  bool state_action() const { return num_actions_ > 1; }
  const std::vector<double>& levels() const { return levels_; }
  const QtdHyper& hyper() const { return hyper_; }

  virtual Backend backend() const = 0;
  /// Particles in level order (index i targets tau_i); not necessarily sorted.
  virtual std::vector<double> predict(const State& s, Action a) const = 0;
  /// Sorted particles, as exposed at inference time.
  std::vector<double> particles(const State& s, Action a = 0) const;
  /// Moves predictions along the batch-averaged directions with the given step.
  virtual void apply(std::span<const ParticleGradient> batch, double step) = 0;
  virtual std::unique_ptr<QuantileModel> clone() const = 0;
  virtual void save_parameters(std::ostream& os) const = 0;
  virtual void load_parameters(std::istream& is) = 0;

 protected:
  void check_action(Action a) const;

 private:
  int m_;
  int num_actions_;
  QtdHyper hyper_;
  std::vector<double> levels_;
};

class TabularQuantileModel final : public QuantileModel {
 public:
  /// All particles start at zero.
  TabularQuantileModel(int num_states, int num_quantiles, int num_actions, QtdHyper hyper);

  Backend backend() const override { return Backend::kTabular; }
  std::vector<double> predict(const State& s, Action a) const override;
  void apply(std::span<const ParticleGradient> batch, double step) override;
  std::unique_ptr<QuantileModel> clone() const override;
  void save_parameters(std::ostream& os) const override;
  void load_parameters(std::istream& is) override;

  int num_states() const { return num_states_; }
  double theta(int s, Action a, int i) const { return table_[offset(s, a) + i]; }
  void set_theta(int s, Action a, int i, double v) { table_[offset(s, a) + i] = v; }
  double max_abs() const;

 private:
  std::size_t offset(int s, Action a) const;

  int num_states_;
  std::vector<double> table_;
};

/// theta(s, a, .) = W_a * [1, s]; ridge penalty applied as weight decay.
class LinearQuantileModel final : public QuantileModel {
 public:
  LinearQuantileModel(std::size_t state_dim, int num_quantiles, int num_actions, QtdHyper hyper,
                      double ridge);

  Backend backend() const override { return Backend::kLinear; }
  std::vector<double> predict(const State& s, Action a) const override;
  void apply(std::span<const ParticleGradient> batch, double step) override;
  std::unique_ptr<QuantileModel> clone() const override;
  void save_parameters(std::ostream& os) const override;
  void load_parameters(std::istream& is) override;

  std::size_t state_dim() const { return state_dim_; }
  double ridge() const { return ridge_; }

 private:
  std::size_t state_dim_;
  double ridge_;
  std::vector<Eigen::MatrixXd> weights_;  // per action, m x (state_dim + 1)
};

/// Feed-forward network state -> hidden -> hidden -> m * num_actions with ReLU
/// activations, trained by momentum SGD.
class MlpQuantileModel final : public QuantileModel {
 public:
  MlpQuantileModel(std::size_t state_dim, int hidden, int num_quantiles, int num_actions,
                   QtdHyper hyper, double momentum, Rng& rng);

  Backend backend() const override { return Backend::kMlp; }
  std::vector<double> predict(const State& s, Action a) const override;
  void apply(std::span<const ParticleGradient> batch, double step) override;
  std::unique_ptr<QuantileModel> clone() const override;
  void save_parameters(std::ostream& os) const override;
  void load_parameters(std::istream& is) override;

  std::size_t state_dim() const { return state_dim_; }
  int hidden() const { return hidden_; }
  double momentum() const { return momentum_; }

 private:
  struct Layer {
    Eigen::MatrixXd w;
    Eigen::VectorXd b;
    Eigen::MatrixXd vw;  // momentum buffers
    Eigen::VectorXd vb;
  };
  Eigen::VectorXd forward(const State& s) const;

  std::size_t state_dim_;
  int hidden_;
  double momentum_;
  std::vector<Layer> layers_;
};

void save_model(const QuantileModel& model, std::ostream& os);
std::unique_ptr<QuantileModel> load_model(std::istream& is);

/// One tabular QTD step on a state-only model using the current particles at s'.
void qtd_update_on(TabularQuantileModel& model, const Transition& tr);
/// One tabular QTD step on a state-action model; a' is drawn from `target` at s'.
void qtd_update_off(TabularQuantileModel& model, const Transition& tr, const Policy& target,
                    Rng& rng);

/// Per-particle ascent direction (1/m) sum_j psi(tau_i, target_j - theta_i),
/// with psi the quantile (kappa = 0) or Huber-quantile (kappa > 0) score.
std::vector<double> quantile_direction(std::span<const double> theta,
                                       std::span<const double> targets,
                                       std::span<const double> levels, double kappa);

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  int passes = 50;
  int batch_size = 1;
  /// Bootstrap from a frozen copy refreshed at the start of every pass.
  bool frozen_target = false;
  double divergence_threshold = 1e6;
};

/// Streams the training transitions in a fresh random order each pass.
/// `target` supplies a' for state-action models and is ignored for state-only ones.
void train_qtd(QuantileModel& model, std::span<const Transition> data, const Policy* target,
               const TrainConfig& config, Rng& rng);

/// Return-distribution estimate for the target policy at any state.
class ReturnModel {
 public:
  virtual ~ReturnModel() = default;
  virtual ReturnDistribution distribution(const State& s) const = 0;
  virtual double value(const State& s) const { return distribution(s).mean(); }
};

/// sum_a pi(a|s) eta(s, a), carried as explicit mixture weights.
ReturnDistribution marginalize(const QuantileModel& model, const State& s, const Policy& target);

/// Binds a quantile model to the target policy used for marginalization.
class TargetReturnModel final : public ReturnModel {
 public:
  TargetReturnModel(std::shared_ptr<const QuantileModel> model, PolicyPtr target);

  ReturnDistribution distribution(const State& s) const override;
  const QuantileModel& model() const { return *model_; }

 private:
  std::shared_ptr<const QuantileModel> model_;
  PolicyPtr target_;
};

}  // namespace crl
