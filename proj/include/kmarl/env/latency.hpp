#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "kmarl/env/config.hpp"
#include "kmarl/numkit/matrix.hpp"

namespace kmarl::env {

struct TaskSpec {
  double data_size = 0.0;       // Mbit
  double compute_demand = 0.0;  // megacycles
};

struct VehicleState {
  Point position;
  double speed = 0.0;
  TaskSpec task;
  /// Channel power gain per destination for the current slot: RSUs 0..R-1, then MBS.
  std::vector<double> gains;
};

/// One choice per vehicle: 0 = local, 1..R = RSU r, R+1 = MBS.
using JointAction = std::vector<std::size_t>;

struct SlotOutcome {
  std::vector<std::size_t> choice;
  std::vector<double> latency;
  std::vector<double> compute_latency;
  std::vector<double> transmit_latency;
  std::vector<double> local_latency;
  std::vector<double> penalty;
  /// Total compute demand per destination: RSUs 0..R-1, then MBS.
  std::vector<double> load;
  double team_reward = 0.0;

  double mean_latency() const {
    double s = 0.0;
    for (double v : latency) s += v;
    return latency.empty() ? 0.0 : s / static_cast<double>(latency.size());
  }
};

inline double local_latency(const TaskSpec& task, double vehicle_cpu) {
  return task.compute_demand / vehicle_cpu;
}

/// Shannon rate B*log2(1 + p*g/(sigma^2 * s^2)), shared by RSU and MBS links.
inline double link_rate(double bandwidth, double transmit_power, double gain, double noise_power,
                        double distance) {
  if (!(distance > 0.0)) {
    throw std::domain_error("link_rate: distance must be positive, got " + std::to_string(distance));
  }
  const double snr = transmit_power * gain / (noise_power * distance * distance);
  return bandwidth * std::log2(1.0 + snr);
}

inline double distance(const Point& a, const Point& b) { return std::hypot(a.x - b.x, a.y - b.y); }

inline std::string choice_label(std::size_t choice, std::size_t num_rsus) {
  if (choice == 0) return "local";
  if (choice == num_rsus + 1) return "mbs";
  return "rsu" + std::to_string(choice);
}

/// Destination load zeta_d = sum of compute demand of vehicles choosing d.
/// Index layout matches SlotOutcome::load.
inline std::vector<double> destination_loads(std::span<const std::size_t> joint,
                                             std::span<const TaskSpec> tasks,
                                             std::size_t num_rsus) {
  std::vector<double> load(num_rsus + 1, 0.0);
  for (std::size_t i = 0; i < joint.size(); ++i) {
    if (joint[i] != 0) load[joint[i] - 1] += tasks[i].compute_demand;
  }
  return load;
}

/// Allocated capacity f = (phi_co / zeta_d) * F_d for every offloading
/// vehicle; locally computing vehicles get their own CPU.
inline std::vector<double> resource_shares(std::span<const std::size_t> joint,
                                           std::span<const TaskSpec> tasks,
                                           const EnvConfig& cfg) {
  const std::vector<double> load = destination_loads(joint, tasks, cfg.num_rsus);
  std::vector<double> share(joint.size());
  for (std::size_t i = 0; i < joint.size(); ++i) {
    const std::size_t c = joint[i];
    if (c == 0) {
      share[i] = cfg.vehicle_cpu;
    } else {
      const double capacity = c == cfg.mbs_action() ? cfg.mbs_cpu : cfg.rsu_cpu;
      share[i] = tasks[i].compute_demand / load[c - 1] * capacity;
    }
  }
  return share;
}

inline void validate_joint(std::span<const std::size_t> joint, const EnvConfig& cfg) {
  if (joint.size() != cfg.num_vehicles) {
    throw std::invalid_argument("joint action has " + std::to_string(joint.size()) +
                                " entries for " + std::to_string(cfg.num_vehicles) + " vehicles");
  }
  for (std::size_t c : joint) {
    if (c >= cfg.num_actions()) {
      throw std::invalid_argument("joint action choice " + std::to_string(c) + " out of range");
    }
  }
}

/// eta_i = c * max(0, La_i - La_i^loc); reward = -(1/I) sum(eta_i + La_i).
/// Fills outcome.penalty and outcome.team_reward and returns the reward.
inline double team_reward(SlotOutcome& outcome, const EnvConfig& cfg) {
  const std::size_t n = outcome.latency.size();
  outcome.penalty.assign(n, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double excess = outcome.latency[i] - outcome.local_latency[i];
    outcome.penalty[i] = cfg.penalty_coefficient * (excess > 0.0 ? excess : 0.0);
    total += outcome.penalty[i] + outcome.latency[i];
  }
  outcome.team_reward = -total / static_cast<double>(n);
  return outcome.team_reward;
}

/// Per-vehicle latency of a joint action in the current slot.
inline SlotOutcome slot_latencies(std::span<const std::size_t> joint,
                                  std::span<const VehicleState> vehicles, const EnvConfig& cfg) {
  validate_joint(joint, cfg);
  const std::size_t n = vehicles.size();
  std::vector<TaskSpec> tasks(n);
  for (std::size_t i = 0; i < n; ++i) tasks[i] = vehicles[i].task;

  SlotOutcome out;
  out.choice.assign(joint.begin(), joint.end());
  out.load = destination_loads(joint, tasks, cfg.num_rsus);
  const std::vector<double> share = resource_shares(joint, tasks, cfg);
  out.latency.resize(n);
  out.compute_latency.resize(n);
  out.transmit_latency.assign(n, 0.0);
  out.local_latency.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const VehicleState& v = vehicles[i];
    const std::size_t c = joint[i];
    out.local_latency[i] = local_latency(v.task, cfg.vehicle_cpu);
    out.compute_latency[i] = v.task.compute_demand / share[i];
    if (c != 0) {
      const bool mbs = c == cfg.mbs_action();
      const Point& dest = mbs ? cfg.mbs_position : cfg.rsu_positions[c - 1];
      const double rate = link_rate(mbs ? cfg.mbs_bandwidth : cfg.rsu_bandwidth,
                                    cfg.transmit_power, v.gains[c - 1], cfg.noise_power,
                                    distance(v.position, dest));
      out.transmit_latency[i] = v.task.data_size / rate;
    }
    out.latency[i] = out.compute_latency[i] + out.transmit_latency[i];
  }
  team_reward(out, cfg);
  return out;
}

/// A_ij = 1 iff i != j and the vehicles are within `range` meters. A zero
/// range yields no links even for coincident vehicles.
inline num::Matrix adjacency(std::span<const VehicleState> vehicles, double range) {
  const std::size_t n = vehicles.size();
  num::Matrix a(n, n);
  if (!(range > 0.0)) return a;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      if (distance(vehicles[i].position, vehicles[j].position) <= range) {
        a(i, j) = 1.0;
        a(j, i) = 1.0;
      }
    }
  return a;
}

}  // namespace kmarl::env
