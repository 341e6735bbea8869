#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "crl/env.hpp"
#include "crl/quantile_model.hpp"

namespace crl {

/// k-extended tuple (S_t, A_t, R_t, ..., S_{t+k}) cut from one trajectory.
struct Segment {
  std::vector<State> states;    // k + 1 states
  std::vector<Action> actions;  // k actions
  std::vector<double> rewards;  // k rewards
  int trajectory_id = 0;
  int t = 0;

  int k() const { return static_cast<int>(rewards.size()); }
  const State& first() const { return states.front(); }
  const State& last() const { return states.back(); }
};

struct ReplayBuffer {
  int k = 1;
  std::vector<Segment> segments;
  std::string setting;
  std::string behavior_policy;
  std::string target_policy;

  std::size_t size() const { return segments.size(); }
};

enum class SplitRule { kTrajectory, kTuple };

SplitRule parse_split_rule(const std::string& s);
std::string to_string(SplitRule rule);

/// Training side of a split plus the calibration replay buffer.
struct DataSplit {
  std::vector<Transition> train;
  /// States S_{i0} with (i, 0) on the training side.
  std::vector<State> train_initial_states;
  ReplayBuffer calibration;
};

/// All segments of a trajectory with start times t = 0, ..., T - k.
std::vector<Segment> extract_segments(const Trajectory& traj, int k);

/// Splits trajectories into disjoint training and calibration index sets.
/// Trajectory-wise splitting sends whole trajectories to one side; tuple-wise
/// splitting assigns each (i, t) independently. `train_fraction` of the units
/// (trajectories or tuples) go to training. Throws if k > T - 1 for any trajectory.
DataSplit build_buffers(std::span<const Trajectory> trajectories, int k, SplitRule rule, Rng& rng,
                        double train_fraction = 0.5);

/// Discounted sum of the segment's observed rewards.
double head_return(const Segment& seg, double discount);

/// k-step pseudo-return: observed discounted rewards plus gamma^k times a draw
/// from the estimated return distribution at the segment's last state.
double pseudo_return(const Segment& seg, const ReturnModel& model, double discount, Rng& rng);

/// Row-oriented text export, one segment per line after a versioned header:
///   trajectory_id t s_0 ... s_k | a_0 ... a_{k-1} | r_0 ... r_{k-1}
/// where each state is written as comma-separated features.
void export_buffer(const ReplayBuffer& buffer, std::ostream& os);

}  // namespace crl
