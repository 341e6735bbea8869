#include "crl/replay.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace crl {

SplitRule parse_split_rule(const std::string& s) {
  if (s == "trajectory") return SplitRule::kTrajectory;
  if (s == "tuple") return SplitRule::kTuple;
  throw std::invalid_argument("unknown split rule '" + s + "' (expected trajectory or tuple)");
}

std::string to_string(SplitRule rule) {
  return rule == SplitRule::kTrajectory ? "trajectory" : "tuple";
}

namespace {

void check_k(const Trajectory& traj, int k) {
  if (k < 1) throw std::invalid_argument("segment length k must be >= 1");
  const int T = static_cast<int>(traj.length());
  if (k > T - 1) {
    throw std::invalid_argument("segment length k=" + std::to_string(k) +
                                " exceeds T-1=" + std::to_string(T - 1));
  }
}

Segment make_segment(const Trajectory& traj, int t, int k) {
  Segment seg;
  seg.trajectory_id = traj.id;
  seg.t = t;
  seg.states.reserve(static_cast<std::size_t>(k) + 1);
  for (int h = 0; h < k; ++h) {
    const Transition& tr = traj.steps[static_cast<std::size_t>(t + h)];
    seg.states.push_back(tr.s);
    seg.actions.push_back(tr.a);
    seg.rewards.push_back(tr.r);
  }
  seg.states.push_back(traj.steps[static_cast<std::size_t>(t + k - 1)].s_next);
  return seg;
}

std::size_t split_count(std::size_t n, double fraction) {
  return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
}

}  // namespace

std::vector<Segment> extract_segments(const Trajectory& traj, int k) {
  check_k(traj, k);
  const int T = static_cast<int>(traj.length());
  std::vector<Segment> out;
  out.reserve(static_cast<std::size_t>(T - k + 1));
  // S_{t+k} is available for t + k <= T through the last step's next-state field.
  for (int t = 0; t <= T - k; ++t) out.push_back(make_segment(traj, t, k));
  return out;
}

DataSplit build_buffers(std::span<const Trajectory> trajectories, int k, SplitRule rule, Rng& rng,
                        double train_fraction) {
  if (trajectories.empty()) throw std::invalid_argument("build_buffers: no trajectories");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument("train_fraction must lie in (0, 1)");
  }
  for (const auto& traj : trajectories) check_k(traj, k);

  DataSplit split;
  split.calibration.k = k;

  if (rule == SplitRule::kTrajectory) {
    std::vector<std::size_t> order(trajectories.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t n_train = split_count(order.size(), train_fraction);
    if (n_train == 0 || n_train == order.size()) {
      throw std::invalid_argument("trajectory split leaves one side empty");
    }
    std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::sort(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    for (std::size_t j = 0; j < n_train; ++j) {
      const Trajectory& traj = trajectories[order[j]];
      split.train_initial_states.push_back(traj.steps.front().s);
      split.train.insert(split.train.end(), traj.steps.begin(), traj.steps.end());
    }
    for (std::size_t j = n_train; j < order.size(); ++j) {
      auto segs = extract_segments(trajectories[order[j]], k);
      std::move(segs.begin(), segs.end(), std::back_inserter(split.calibration.segments));
    }
    return split;
  }

  // Tuple-wise: every (i, t) goes to exactly one side.
  std::vector<std::pair<std::size_t, int>> units;
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    for (int t = 0; t < static_cast<int>(trajectories[i].length()); ++t) units.emplace_back(i, t);
  }
  std::vector<char> to_train(units.size(), 0);
  std::vector<std::size_t> order(units.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_train = split_count(units.size(), train_fraction);
  for (std::size_t j = 0; j < n_train; ++j) to_train[order[j]] = 1;
  for (std::size_t u = 0; u < units.size(); ++u) {
    const auto [i, t] = units[u];
    const Trajectory& traj = trajectories[i];
    if (to_train[u]) {
      split.train.push_back(traj.steps[static_cast<std::size_t>(t)]);
      if (t == 0) split.train_initial_states.push_back(traj.steps.front().s);
    } else if (t <= static_cast<int>(traj.length()) - k) {
      split.calibration.segments.push_back(make_segment(traj, t, k));
    }
  }
  if (split.train.empty() || split.calibration.segments.empty()) {
    throw std::invalid_argument("tuple split leaves one side empty");
  }
  return split;
}

double head_return(const Segment& seg, double discount) {
  double acc = 0.0;
  double g = 1.0;
  for (double r : seg.rewards) {
    acc += g * r;
    g *= discount;
  }
  return acc;
}

double pseudo_return(const Segment& seg, const ReturnModel& model, double discount, Rng& rng) {
  const double tail = model.distribution(seg.last()).sample(rng);
  return head_return(seg, discount) + std::pow(discount, seg.k()) * tail;
}

void export_buffer(const ReplayBuffer& buffer, std::ostream& os) {
  os << "# crl-replay-buffer 1\n";
  os << "# k=" << buffer.k << " setting=" << buffer.setting
     << " behavior=" << buffer.behavior_policy << " target=" << buffer.target_policy
     << " segments=" << buffer.size() << "\n";
  auto write_state = [&os](const State& s) {
    for (std::size_t d = 0; d < s.size(); ++d) os << (d ? "," : "") << s[d];
  };
  const auto old_precision = os.precision(17);
  for (const Segment& seg : buffer.segments) {
    os << seg.trajectory_id << ' ' << seg.t;
    for (const State& s : seg.states) {
      os << ' ';
      write_state(s);
    }
    os << " |";
    for (Action a : seg.actions) os << ' ' << a;
    os << " |";
    for (double r : seg.rewards) os << ' ' << r;
    os << '\n';
  }
  os.precision(old_precision);
}

}  // namespace crl
