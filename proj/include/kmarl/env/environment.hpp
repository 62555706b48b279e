#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "kmarl/env/config.hpp"
#include "kmarl/env/latency.hpp"
#include "kmarl/numkit/matrix.hpp"
#include "kmarl/numkit/random.hpp"

namespace kmarl::env {

inline constexpr std::size_t kObservationDim = 4;

/// Normalized local view of one vehicle: x, y, data size, compute demand.
using Observation = std::array<double, kObservationDim>;

struct StepResult {
  std::vector<Observation> observations;
  double reward = 0.0;
  SlotOutcome outcome;
  bool done = false;
};

inline Observation observe(const VehicleState& v, const EnvConfig& cfg) {
  double lo = cfg.lane_offsets.front(), hi = lo;
  for (double y : cfg.lane_offsets) {
    lo = y < lo ? y : lo;
    hi = y > hi ? y : hi;
  }
  const double y = hi > lo ? (v.position.y - lo) / (hi - lo) : 0.0;
  return {v.position.x / cfg.road_length, y, v.task.data_size / cfg.max_task_size(),
          v.task.compute_demand / cfg.max_compute_demand()};
}

/// Vehicle/RSU/MBS world. Vehicles drive along a 1-D road at constant speed
/// and wrap at the end. Every slot each vehicle carries one fresh task.
class Environment {
 public:
  explicit Environment(EnvConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

  const EnvConfig& config() const { return cfg_; }
  std::size_t num_agents() const { return cfg_.num_vehicles; }
  std::size_t num_actions() const { return cfg_.num_actions(); }
  std::size_t slot() const { return slot_; }
  bool done() const { return slot_ >= cfg_.horizon; }
  const std::vector<VehicleState>& vehicles() const { return vehicles_; }
  const std::vector<Point>& start_positions() const { return start_; }

  std::vector<Observation> reset() { return reset(cfg_.rng_seed); }

  std::vector<Observation> reset(std::uint64_t seed) {
    rng_.seed(seed);
    slot_ = 0;
    vehicles_.assign(cfg_.num_vehicles, VehicleState{});
    start_.clear();
    for (VehicleState& v : vehicles_) {
      v.position.x = uniform(rng_, 0.0, cfg_.road_length);
      v.position.y = cfg_.lane_offsets[uniform_index(rng_, cfg_.lane_offsets.size())];
      v.speed = uniform(rng_, cfg_.speed_range.first, cfg_.speed_range.second);
      start_.push_back(v.position);
    }
    draw_slot();
    started_ = true;
    return observations();
  }

  StepResult step(const JointAction& joint) {
    if (!started_) throw std::logic_error("step: environment was never reset");
    if (done()) throw std::logic_error("step: episode already finished");
    StepResult res;
    res.outcome = slot_latencies(joint, vehicles_, cfg_);
    res.reward = res.outcome.team_reward;
    for (VehicleState& v : vehicles_) {
      v.position.x = std::fmod(v.position.x + v.speed, cfg_.road_length);
    }
    ++slot_;
    draw_slot();
    res.done = done();
    res.observations = observations();
    return res;
  }

  std::vector<Observation> observations() const {
    std::vector<Observation> obs;
    obs.reserve(vehicles_.size());
    for (const VehicleState& v : vehicles_) obs.push_back(observe(v, cfg_));
    return obs;
  }

  /// I x 4 observation matrix, row i = agent i.
  num::Matrix observation_matrix() const {
    num::Matrix m(vehicles_.size(), kObservationDim);
    for (std::size_t i = 0; i < vehicles_.size(); ++i) {
      const Observation o = observe(vehicles_[i], cfg_);
      for (std::size_t j = 0; j < kObservationDim; ++j) m(i, j) = o[j];
    }
    return m;
  }

  num::Matrix adjacency_matrix() const { return adjacency(vehicles_, cfg_.adjacency_range); }

 private:
  // New task and fresh channel gains for every vehicle.
  void draw_slot() {
    const std::size_t links = cfg_.num_rsus + 1;
    for (VehicleState& v : vehicles_) {
      v.task.data_size = cfg_.task_sizes[uniform_index(rng_, cfg_.task_sizes.size())];
      const double rho = uniform(rng_, cfg_.rho_range.first, cfg_.rho_range.second);
      v.task.compute_demand = rho * v.task.data_size;
      v.gains.assign(links, 1.0);
      if (cfg_.rayleigh_fading) {
        for (double& g : v.gains) g = exponential(rng_, 1.0);
      }
    }
  }

  EnvConfig cfg_;
  Rng rng_;
  std::vector<VehicleState> vehicles_;
  std::vector<Point> start_;
  std::size_t slot_ = 0;
  bool started_ = false;
};

}  // namespace kmarl::env
