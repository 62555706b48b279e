#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "kmarl/env/environment.hpp"

namespace kmarl::oracle {

using env::EnvConfig;
using env::JointAction;
using env::VehicleState;

struct OracleResult {
  JointAction best_joint;
  double best_mean_latency = 0.0;
  std::uint64_t evaluated_count = 0;
};

class EnumerationCapExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint64_t kDefaultEnumerationCap = 10'000'000;

/// (R+2)^I, or cap+1 if that would exceed the cap.
inline std::uint64_t joint_action_count(std::size_t num_vehicles, std::size_t num_actions,
                                        std::uint64_t cap) {
  std::uint64_t count = 1;
  for (std::size_t i = 0; i < num_vehicles; ++i) {
    if (count > cap / num_actions) return cap + 1;
    count *= num_actions;
  }
  return count;
}

/// Exhaustive search of the slot's joint actions. Joint actions are visited
/// in lexicographic order (vehicle 0 most significant) and only strict
/// improvements replace the incumbent, so ties resolve to the smallest.
inline OracleResult exact_slot_optimum(std::span<const VehicleState> vehicles,
                                       const EnvConfig& cfg,
                                       std::uint64_t cap = kDefaultEnumerationCap) {
  const std::size_t n = vehicles.size();
  const std::size_t k = cfg.num_actions();
  const std::uint64_t total = joint_action_count(n, k, cap);
  if (total > cap) {
    throw EnumerationCapExceeded("exact_slot_optimum: " + std::to_string(k) + "^" +
                                 std::to_string(n) + " joint actions exceed the cap of " +
                                 std::to_string(cap));
  }
  OracleResult best;
  best.best_mean_latency = std::numeric_limits<double>::infinity();
  JointAction joint(n, 0);
  for (std::uint64_t it = 0; it < total; ++it) {
    const double mean = env::slot_latencies(joint, vehicles, cfg).mean_latency();
    ++best.evaluated_count;
    if (mean < best.best_mean_latency) {
      best.best_mean_latency = mean;
      best.best_joint = joint;
    }
    for (std::size_t pos = n; pos-- > 0;) {
      if (++joint[pos] < k) break;
      joint[pos] = 0;
    }
  }
  return best;
}

/// Largest-demand-first greedy: each vehicle takes the option minimizing its
/// own latency given the vehicles already placed (later vehicles are ignored).
inline JointAction greedy_heuristic(std::span<const VehicleState> vehicles, const EnvConfig& cfg) {
  const std::size_t n = vehicles.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return vehicles[a].task.compute_demand > vehicles[b].task.compute_demand;
  });

  std::vector<double> load(cfg.num_rsus + 1, 0.0);
  JointAction joint(n, 0);
  for (std::size_t i : order) {
    const VehicleState& v = vehicles[i];
    std::size_t best_choice = 0;
    double best = env::local_latency(v.task, cfg.vehicle_cpu);
    for (std::size_t c = 1; c < cfg.num_actions(); ++c) {
      const bool mbs = c == cfg.mbs_action();
      const double capacity = mbs ? cfg.mbs_cpu : cfg.rsu_cpu;
      const env::Point& dest = mbs ? cfg.mbs_position : cfg.rsu_positions[c - 1];
      const double rate =
          env::link_rate(mbs ? cfg.mbs_bandwidth : cfg.rsu_bandwidth, cfg.transmit_power,
                         v.gains[c - 1], cfg.noise_power, env::distance(v.position, dest));
      const double lat = (load[c - 1] + v.task.compute_demand) / capacity + v.task.data_size / rate;
      if (lat < best) {
        best = lat;
        best_choice = c;
      }
    }
    joint[i] = best_choice;
    if (best_choice != 0) load[best_choice - 1] += v.task.compute_demand;
  }
  return joint;
}

struct PolicyEvaluation {
  double mean_latency = 0.0;
  double mean_reward = 0.0;
  std::size_t slots = 0;
};

/// A frozen policy sees the environment before each slot and returns a joint
/// action. Learned policies read only observations; oracle policies may use
/// the full slot state.
using Policy = std::function<JointAction(const env::Environment&)>;

/// Runs `episodes` full episodes; episode e uses reset seed mix_seed(seed, e).
inline PolicyEvaluation evaluate_policy(const Policy& policy, std::size_t episodes,
                                        const EnvConfig& cfg, std::uint64_t seed) {
  env::Environment world(cfg);
  PolicyEvaluation eval;
  double latency_sum = 0.0, reward_sum = 0.0;
  for (std::size_t e = 0; e < episodes; ++e) {
    world.reset(mix_seed(seed, e));
    while (!world.done()) {
      const env::StepResult r = world.step(policy(world));
      latency_sum += r.outcome.mean_latency();
      reward_sum += r.reward;
      ++eval.slots;
    }
  }
  if (eval.slots > 0) {
    eval.mean_latency = latency_sum / static_cast<double>(eval.slots);
    eval.mean_reward = reward_sum / static_cast<double>(eval.slots);
  }
  return eval;
}

inline Policy always_local_policy() {
  return [](const env::Environment& w) { return JointAction(w.num_agents(), 0); };
}

inline Policy exact_policy(std::uint64_t cap = kDefaultEnumerationCap) {
  return [cap](const env::Environment& w) {
    return exact_slot_optimum(w.vehicles(), w.config(), cap).best_joint;
  };
}

inline Policy greedy_policy() {
  return [](const env::Environment& w) { return greedy_heuristic(w.vehicles(), w.config()); };
}

}  // namespace kmarl::oracle
