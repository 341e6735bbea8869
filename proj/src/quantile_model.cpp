#include "crl/quantile_model.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>

namespace crl {

std::string to_string(Backend b) {
  switch (b) {
    case Backend::kTabular: return "tabular";
    case Backend::kLinear: return "linear";
    case Backend::kMlp: return "mlp";
  }
  return "unknown";
}

QuantileModel::QuantileModel(int num_quantiles, int num_actions, QtdHyper hyper)
    : m_(num_quantiles), num_actions_(num_actions), hyper_(hyper) {
  if (num_quantiles < 1) throw std::invalid_argument("need at least one quantile particle");
  if (num_actions < 1) throw std::invalid_argument("need at least one action head");
  levels_.resize(static_cast<std::size_t>(m_));
  for (int i = 0; i < m_; ++i) levels_[i] = (2.0 * (i + 1) - 1.0) / (2.0 * m_);
}

std::vector<double> QuantileModel::particles(const State& s, Action a) const {
  std::vector<double> p = predict(s, a);
  std::sort(p.begin(), p.end());
  return p;
}

void QuantileModel::check_action(Action a) const {
  if (a < 0 || a >= num_actions_) throw std::out_of_range("action head out of range");
}

// --- tabular ---------------------------------------------------------------

TabularQuantileModel::TabularQuantileModel(int num_states, int num_quantiles, int num_actions,
                                           QtdHyper hyper)
    : QuantileModel(num_quantiles, num_actions, hyper),
      num_states_(num_states),
      table_(static_cast<std::size_t>(num_states) * num_actions * num_quantiles, 0.0) {
  if (num_states < 1) throw std::invalid_argument("tabular model needs at least one state");
}

std::size_t TabularQuantileModel::offset(int s, Action a) const {
  if (s < 0 || s >= num_states_) throw std::out_of_range("tabular state index out of range");
  check_action(a);
  return (static_cast<std::size_t>(s) * num_actions() + a) * num_quantiles();
}

std::vector<double> TabularQuantileModel::predict(const State& s, Action a) const {
  const std::size_t o = offset(s.index(), a);
  return {table_.begin() + static_cast<std::ptrdiff_t>(o),
          table_.begin() + static_cast<std::ptrdiff_t>(o + num_quantiles())};
}

void TabularQuantileModel::apply(std::span<const ParticleGradient> batch, double step) {
  const double scale = step / static_cast<double>(batch.size());
  for (const ParticleGradient& g : batch) {
    const std::size_t o = offset(g.state->index(), g.action);
    for (int i = 0; i < num_quantiles(); ++i) table_[o + i] += scale * g.direction[i];
  }
}

std::unique_ptr<QuantileModel> TabularQuantileModel::clone() const {
  return std::make_unique<TabularQuantileModel>(*this);
}

double TabularQuantileModel::max_abs() const {
  double m = 0.0;
  for (double v : table_) m = std::max(m, std::abs(v));
  return m;
}

void TabularQuantileModel::save_parameters(std::ostream& os) const {
  os << "states " << num_states_ << '\n';
  for (std::size_t i = 0; i < table_.size(); ++i) {
    os << table_[i] << ((i + 1) % num_quantiles() == 0 ? '\n' : ' ');
  }
}

void TabularQuantileModel::load_parameters(std::istream& is) {
  for (double& v : table_) {
    if (!(is >> v)) throw std::runtime_error("truncated tabular model parameters");
  }
}

// --- linear ----------------------------------------------------------------

LinearQuantileModel::LinearQuantileModel(std::size_t state_dim, int num_quantiles, int num_actions,
                                         QtdHyper hyper, double ridge)
    : QuantileModel(num_quantiles, num_actions, hyper), state_dim_(state_dim), ridge_(ridge) {
  if (ridge < 0.0) throw std::invalid_argument("ridge penalty must be nonnegative");
  weights_.assign(static_cast<std::size_t>(num_actions),
                  Eigen::MatrixXd::Zero(num_quantiles, static_cast<Eigen::Index>(state_dim + 1)));
}

namespace {

Eigen::VectorXd with_intercept(const State& s) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(s.size() + 1));
  x[0] = 1.0;
  for (std::size_t j = 0; j < s.size(); ++j) x[static_cast<Eigen::Index>(j + 1)] = s[j];
  return x;
}

}  // namespace

std::vector<double> LinearQuantileModel::predict(const State& s, Action a) const {
  check_action(a);
  if (s.size() != state_dim_) throw std::invalid_argument("state dimension mismatch");
  const Eigen::VectorXd out = weights_[a] * with_intercept(s);
  return {out.data(), out.data() + out.size()};
}

void LinearQuantileModel::apply(std::span<const ParticleGradient> batch, double step) {
  const double scale = step / static_cast<double>(batch.size());
  std::vector<Eigen::MatrixXd> grad(weights_.size());
  for (auto& g : grad) g = Eigen::MatrixXd::Zero(weights_[0].rows(), weights_[0].cols());
  for (const ParticleGradient& g : batch) {
    check_action(g.action);
    const Eigen::Map<const Eigen::VectorXd> d(g.direction.data(),
                                              static_cast<Eigen::Index>(g.direction.size()));
    grad[g.action].noalias() += d * with_intercept(*g.state).transpose();
  }
  for (std::size_t a = 0; a < weights_.size(); ++a) {
    Eigen::MatrixXd decay = weights_[a];
    decay.col(0).setZero();  // intercept is not penalized
    weights_[a] += scale * grad[a] - step * ridge_ * decay;
  }
}

std::unique_ptr<QuantileModel> LinearQuantileModel::clone() const {
  return std::make_unique<LinearQuantileModel>(*this);
}

void LinearQuantileModel::save_parameters(std::ostream& os) const {
  os << "dim " << state_dim_ << " ridge " << ridge_ << '\n';
  for (const auto& w : weights_) {
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) os << w(r, c) << (c + 1 == w.cols() ? '\n' : ' ');
    }
  }
}

void LinearQuantileModel::load_parameters(std::istream& is) {
  for (auto& w : weights_) {
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) {
        if (!(is >> w(r, c))) throw std::runtime_error("truncated linear model parameters");
      }
    }
  }
}

// --- mlp -------------------------------------------------------------------

MlpQuantileModel::MlpQuantileModel(std::size_t state_dim, int hidden, int num_quantiles,
                                   int num_actions, QtdHyper hyper, double momentum, Rng& rng)
    : QuantileModel(num_quantiles, num_actions, hyper),
      state_dim_(state_dim),
      hidden_(hidden),
      momentum_(momentum) {
  if (hidden < 1) throw std::invalid_argument("hidden width must be positive");
  const std::vector<Eigen::Index> sizes{static_cast<Eigen::Index>(state_dim), hidden, hidden,
                                        static_cast<Eigen::Index>(num_quantiles) * num_actions};
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    Layer layer;
    // He-uniform initialization for the ReLU stack.
    const double limit = std::sqrt(6.0 / static_cast<double>(sizes[l]));
    std::uniform_real_distribution<double> u(-limit, limit);
    layer.w.resize(sizes[l + 1], sizes[l]);
    for (Eigen::Index i = 0; i < layer.w.size(); ++i) layer.w.data()[i] = u(rng);
    layer.b = Eigen::VectorXd::Zero(sizes[l + 1]);
    layer.vw = Eigen::MatrixXd::Zero(sizes[l + 1], sizes[l]);
    layer.vb = Eigen::VectorXd::Zero(sizes[l + 1]);
    layers_.push_back(std::move(layer));
  }
}

Eigen::VectorXd MlpQuantileModel::forward(const State& s) const {
  if (s.size() != state_dim_) throw std::invalid_argument("state dimension mismatch");
  Eigen::VectorXd h = Eigen::Map<const Eigen::VectorXd>(s.features.data(),
                                                        static_cast<Eigen::Index>(s.size()));
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    h = layers_[l].w * h + layers_[l].b;
    if (l + 1 < layers_.size()) h = h.cwiseMax(0.0);
  }
  return h;
}

std::vector<double> MlpQuantileModel::predict(const State& s, Action a) const {
  check_action(a);
  const Eigen::VectorXd out = forward(s);
  const auto m = static_cast<Eigen::Index>(num_quantiles());
  return {out.data() + a * m, out.data() + (a + 1) * m};
}

void MlpQuantileModel::apply(std::span<const ParticleGradient> batch, double step) {
  const auto n = static_cast<Eigen::Index>(batch.size());
  const auto m = static_cast<Eigen::Index>(num_quantiles());
  Eigen::MatrixXd x(static_cast<Eigen::Index>(state_dim_), n);
  for (Eigen::Index c = 0; c < n; ++c) {
    const State& s = *batch[static_cast<std::size_t>(c)].state;
    for (std::size_t j = 0; j < state_dim_; ++j) x(static_cast<Eigen::Index>(j), c) = s[j];
  }
  std::vector<Eigen::MatrixXd> pre(layers_.size());
  std::vector<Eigen::MatrixXd> act(layers_.size() + 1);
  act[0] = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    pre[l] = (layers_[l].w * act[l]).colwise() + layers_[l].b;
    act[l + 1] = l + 1 < layers_.size() ? Eigen::MatrixXd(pre[l].cwiseMax(0.0)) : pre[l];
  }
  // Loss gradient with respect to the outputs is minus the ascent direction.
  Eigen::MatrixXd delta = Eigen::MatrixXd::Zero(layers_.back().w.rows(), n);
  for (Eigen::Index c = 0; c < n; ++c) {
    const ParticleGradient& g = batch[static_cast<std::size_t>(c)];
    check_action(g.action);
    for (Eigen::Index i = 0; i < m; ++i) delta(g.action * m + i, c) = -g.direction[i];
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t li = layers_.size(); li-- > 0;) {
    Layer& layer = layers_[li];
    const Eigen::MatrixXd gw = delta * act[li].transpose() * inv_n;
    const Eigen::VectorXd gb = delta.rowwise().sum() * inv_n;
    if (li > 0) {
      Eigen::MatrixXd back = layer.w.transpose() * delta;
      delta = back.cwiseProduct((pre[li - 1].array() > 0.0).cast<double>().matrix());
    }
    layer.vw = momentum_ * layer.vw + gw;
    layer.vb = momentum_ * layer.vb + gb;
    layer.w -= step * layer.vw;
    layer.b -= step * layer.vb;
  }
}

std::unique_ptr<QuantileModel> MlpQuantileModel::clone() const {
  return std::make_unique<MlpQuantileModel>(*this);
}

void MlpQuantileModel::save_parameters(std::ostream& os) const {
  os << "dim " << state_dim_ << " hidden " << hidden_ << " momentum " << momentum_ << '\n';
  for (const Layer& layer : layers_) {
    for (Eigen::Index i = 0; i < layer.w.size(); ++i) os << layer.w.data()[i] << ' ';
    os << '\n';
    for (Eigen::Index i = 0; i < layer.b.size(); ++i) os << layer.b[i] << ' ';
    os << '\n';
  }
}

void MlpQuantileModel::load_parameters(std::istream& is) {
  for (Layer& layer : layers_) {
    for (Eigen::Index i = 0; i < layer.w.size(); ++i) {
      if (!(is >> layer.w.data()[i])) throw std::runtime_error("truncated mlp parameters");
    }
    for (Eigen::Index i = 0; i < layer.b.size(); ++i) {
      if (!(is >> layer.b[i])) throw std::runtime_error("truncated mlp parameters");
    }
    layer.vw.setZero();
    layer.vb.setZero();
  }
}

// --- serialization ---------------------------------------------------------

namespace {

constexpr const char* kModelMagic = "crl-quantile-model";
constexpr int kModelVersion = 1;

void expect_token(std::istream& is, const std::string& want) {
  std::string got;
  if (!(is >> got) || got != want) {
    throw std::runtime_error("model file: expected '" + want + "', got '" + got + "'");
  }
}

}  // namespace

void save_model(const QuantileModel& model, std::ostream& os) {
  const auto old_precision = os.precision(17);
  const QtdHyper& h = model.hyper();
  os << kModelMagic << ' ' << kModelVersion << '\n'
     << "backend " << to_string(model.backend()) << '\n'
     << "quantiles " << model.num_quantiles() << " actions " << model.num_actions() << '\n'
     << "discount " << h.discount << " step " << h.step << " kappa " << h.huber_kappa << '\n';
  model.save_parameters(os);
  os.precision(old_precision);
}

std::unique_ptr<QuantileModel> load_model(std::istream& is) {
  expect_token(is, kModelMagic);
  int version = 0;
  is >> version;
  if (version != kModelVersion) {
    throw std::runtime_error("unsupported model version " + std::to_string(version));
  }
  std::string backend;
  int m = 0;
  int actions = 0;
  QtdHyper h;
  expect_token(is, "backend");
  is >> backend;
  expect_token(is, "quantiles");
  is >> m;
  expect_token(is, "actions");
  is >> actions;
  expect_token(is, "discount");
  is >> h.discount;
  expect_token(is, "step");
  is >> h.step;
  expect_token(is, "kappa");
  is >> h.huber_kappa;
  if (!is) throw std::runtime_error("model file: malformed header");

  std::unique_ptr<QuantileModel> model;
  if (backend == "tabular") {
    int states = 0;
    expect_token(is, "states");
    is >> states;
    model = std::make_unique<TabularQuantileModel>(states, m, actions, h);
  } else if (backend == "linear") {
    std::size_t dim = 0;
    double ridge = 0.0;
    expect_token(is, "dim");
    is >> dim;
    expect_token(is, "ridge");
    is >> ridge;
    model = std::make_unique<LinearQuantileModel>(dim, m, actions, h, ridge);
  } else if (backend == "mlp") {
    std::size_t dim = 0;
    int hidden = 0;
    double momentum = 0.0;
    expect_token(is, "dim");
    is >> dim;
    expect_token(is, "hidden");
    is >> hidden;
    expect_token(is, "momentum");
    is >> momentum;
    Rng unused(0);
    model = std::make_unique<MlpQuantileModel>(dim, hidden, m, actions, h, momentum, unused);
  } else {
    throw std::runtime_error("model file: unknown backend '" + backend + "'");
  }
  model->load_parameters(is);
  return model;
}

// --- QTD updates -----------------------------------------------------------

std::vector<double> quantile_direction(std::span<const double> theta,
                                       std::span<const double> targets,
                                       std::span<const double> levels, double kappa) {
  std::vector<double> dir(theta.size(), 0.0);
  const double inv = 1.0 / static_cast<double>(targets.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    double acc = 0.0;
    for (double target : targets) {
      const double u = target - theta[i];
      const double below = u < 0.0 ? 1.0 : 0.0;
      if (kappa > 0.0) {
        acc += std::abs(levels[i] - below) * std::clamp(u, -kappa, kappa) / kappa;
      } else {
        acc += levels[i] - below;
      }
    }
    dir[i] = acc * inv;
  }
  return dir;
}

namespace {

std::vector<double> bootstrap_targets(const QuantileModel& source, const Transition& tr,
                                      Action next_action, double discount) {
  std::vector<double> targets = source.predict(tr.s_next, next_action);
  for (double& v : targets) v = tr.r + discount * v;
  return targets;
}

void tabular_step(TabularQuantileModel& model, const Transition& tr, Action a, Action next_action) {
  const QtdHyper& h = model.hyper();
  const std::vector<double> targets = bootstrap_targets(model, tr, next_action, h.discount);
  const std::vector<double> theta = model.predict(tr.s, a);
  ParticleGradient g{&tr.s, a, quantile_direction(theta, targets, model.levels(), h.huber_kappa)};
  model.apply(std::span<const ParticleGradient>(&g, 1), h.step);
}

}  // namespace

void qtd_update_on(TabularQuantileModel& model, const Transition& tr) {
  if (model.state_action()) throw std::invalid_argument("qtd_update_on needs a state-only model");
  tabular_step(model, tr, 0, 0);
}

void qtd_update_off(TabularQuantileModel& model, const Transition& tr, const Policy& target,
                    Rng& rng) {
  if (!model.state_action()) {
    throw std::invalid_argument("qtd_update_off needs a state-action model");
  }
  const Action next = target.sample(tr.s_next, rng);
  tabular_step(model, tr, tr.a, next);
}

void train_qtd(QuantileModel& model, std::span<const Transition> data, const Policy* target,
               const TrainConfig& config, Rng& rng) {
  if (data.empty()) throw std::invalid_argument("train_qtd: empty training split");
  if (model.state_action() && target == nullptr) {
    throw std::invalid_argument("train_qtd: state-action model needs a target policy");
  }
  if (config.batch_size < 1) throw std::invalid_argument("train_qtd: batch size must be >= 1");
  const QtdHyper& h = model.hyper();
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::unique_ptr<QuantileModel> frozen;
  std::vector<ParticleGradient> batch;
  batch.reserve(static_cast<std::size_t>(config.batch_size));

  for (int pass = 0; pass < config.passes; ++pass) {
    std::shuffle(order.begin(), order.end(), rng);
    if (config.frozen_target) frozen = model.clone();
    const QuantileModel& source = config.frozen_target ? *frozen : model;
    for (std::size_t pos = 0; pos < order.size();) {
      batch.clear();
      for (int b = 0; b < config.batch_size && pos < order.size(); ++b, ++pos) {
        const Transition& tr = data[order[pos]];
        const Action a = model.state_action() ? tr.a : 0;
        const Action next = model.state_action() ? target->sample(tr.s_next, rng) : 0;
        const std::vector<double> targets = bootstrap_targets(source, tr, next, h.discount);
        const std::vector<double> theta = model.predict(tr.s, a);
        batch.push_back({&tr.s, a, quantile_direction(theta, targets, model.levels(), h.huber_kappa)});
      }
      model.apply(batch, h.step);
    }
    // Divergence guard on a fixed probe of training states.
    const std::size_t probe = std::min<std::size_t>(data.size(), 64);
    for (std::size_t i = 0; i < probe; ++i) {
      for (Action a = 0; a < model.num_actions(); ++a) {
        for (double v : model.predict(data[i].s, a)) {
          if (!std::isfinite(v) || std::abs(v) > config.divergence_threshold) {
            throw DivergenceError("QTD diverged after pass " + std::to_string(pass + 1) +
                                  ": particle magnitude " + std::to_string(v) + " exceeds " +
                                  std::to_string(config.divergence_threshold) +
                                  " (check the step size)");
          }
        }
      }
    }
  }
}

// --- marginalization -------------------------------------------------------

ReturnDistribution marginalize(const QuantileModel& model, const State& s, const Policy& target) {
  if (!model.state_action()) return ReturnDistribution::particles(model.predict(s, 0));
  std::vector<double> atoms;
  std::vector<double> weights;
  Action only = -1;
  int support = 0;
  for (Action a = 0; a < model.num_actions(); ++a) {
    const double p = target.prob(s, a);
    if (p <= 0.0) continue;
    ++support;
    only = a;
    for (double v : model.predict(s, a)) {
      atoms.push_back(v);
      weights.push_back(p);
    }
  }
  if (support == 0) throw std::invalid_argument("target policy puts no mass on any action");
  if (support == 1) return ReturnDistribution::particles(model.predict(s, only));
  return ReturnDistribution::weighted(std::move(atoms), std::move(weights));
}

TargetReturnModel::TargetReturnModel(std::shared_ptr<const QuantileModel> model, PolicyPtr target)
    : model_(std::move(model)), target_(std::move(target)) {
  if (!model_) throw std::invalid_argument("TargetReturnModel needs a model");
  if (model_->state_action() && !target_) {
    throw std::invalid_argument("state-action model needs a target policy to marginalize");
  }
}

ReturnDistribution TargetReturnModel::distribution(const State& s) const {
  if (!model_->state_action()) return ReturnDistribution::particles(model_->predict(s, 0));
  return marginalize(*model_, s, *target_);
}

}  // namespace crl
