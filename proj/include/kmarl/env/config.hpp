#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace kmarl::env {

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// World parameters. Compute quantities are plain numbers: task data size in
/// Mbit, compute demand in megacycles, CPU capacities in the same numeric
/// scale as the parameter table (so latency = megacycles / capacity).
struct EnvConfig {
  std::size_t num_vehicles = 8;
  std::size_t num_rsus = 4;
  std::size_t horizon = 100;
  double road_length = 2000.0;
  std::vector<Point> rsu_positions;  // empty means evenly spaced along the road
  Point mbs_position{1000.0, 500.0};
  double vehicle_cpu = 5e5;  // F_i
  double rsu_cpu = 6e6;      // F_R
  double mbs_cpu = 1e7;      // F_MBS
  double rsu_bandwidth = 2e8;
  double mbs_bandwidth = 2e7;
  double transmit_power = 0.1;  // 20 dBm
  double noise_power = 1e-9;
  std::vector<double> task_sizes{1.0, 1.5, 2.0};
  std::pair<double, double> rho_range{100.0, 200.0};
  double penalty_coefficient = 1.0;
  double adjacency_range = 300.0;
  std::pair<double, double> speed_range{10.0, 30.0};  // meters per slot
  std::vector<double> lane_offsets{2.0, 6.0};
  double rsu_offset = -10.0;  // y of auto-placed RSUs
  bool rayleigh_fading = true;
  std::uint64_t rng_seed = 1;

  /// RSUs at the centres of R equal road segments; MBS at the road midpoint.
  void place_infrastructure() {
    rsu_positions.clear();
    for (std::size_t r = 0; r < num_rsus; ++r) {
      const double x = (static_cast<double>(r) + 0.5) * road_length / static_cast<double>(num_rsus);
      rsu_positions.push_back({x, rsu_offset});
    }
    mbs_position.x = road_length / 2.0;
  }

  std::size_t num_actions() const { return num_rsus + 2; }
  std::size_t mbs_action() const { return num_rsus + 1; }

  double max_task_size() const {
    double m = 0.0;
    for (double s : task_sizes) m = s > m ? s : m;
    return m;
  }
  double max_compute_demand() const { return rho_range.second * max_task_size(); }

  /// Throws ConfigError naming the first offending field.
  void validate() const {
    auto fail = [](const std::string& field, const std::string& why) {
      throw ConfigError(field + ": " + why);
    };
    if (num_vehicles < 1) fail("num_vehicles", "must be at least 1");
    if (num_rsus < 1) fail("num_rsus", "must be at least 1");
    if (horizon < 1) fail("horizon", "must be at least 1");
    if (!(road_length > 0.0)) fail("road_length", "must be positive");
    if (rsu_positions.size() != num_rsus) {
      fail("rsu_positions", "has " + std::to_string(rsu_positions.size()) + " entries, expected " +
                                std::to_string(num_rsus));
    }
    const std::pair<const char*, double> positive[] = {
        {"vehicle_cpu", vehicle_cpu},       {"rsu_cpu", rsu_cpu},
        {"mbs_cpu", mbs_cpu},               {"rsu_bandwidth", rsu_bandwidth},
        {"mbs_bandwidth", mbs_bandwidth},   {"transmit_power", transmit_power},
        {"noise_power", noise_power}};
    for (const auto& [name, v] : positive) {
      if (!(v > 0.0)) fail(name, "must be positive");
    }
    if (task_sizes.empty()) fail("task_sizes", "must be nonempty");
    for (double s : task_sizes) {
      if (!(s > 0.0)) fail("task_sizes", "entries must be positive");
    }
    if (!(rho_range.first > 0.0) || rho_range.first > rho_range.second) {
      fail("rho_range", "needs 0 < lower <= upper");
    }
    if (penalty_coefficient < 0.0) fail("penalty_coefficient", "must be nonnegative");
    if (adjacency_range < 0.0) fail("adjacency_range", "must be nonnegative");
    if (speed_range.first < 0.0 || speed_range.first > speed_range.second) {
      fail("speed_range", "needs 0 <= lower <= upper");
    }
    if (lane_offsets.empty()) fail("lane_offsets", "must be nonempty");
  }
};

/// Default configuration with I vehicles and R RSUs, infrastructure placed.
inline EnvConfig make_config(std::size_t num_vehicles, std::size_t num_rsus) {
  EnvConfig cfg;
  cfg.num_vehicles = num_vehicles;
  cfg.num_rsus = num_rsus;
  cfg.place_infrastructure();
  return cfg;
}

}  // namespace kmarl::env
