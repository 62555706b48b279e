#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "kmarl/env/config.hpp"
#include "kmarl/harness/csv.hpp"
#include "kmarl/trainer/trainer.hpp"

namespace kmarl::harness {

using json = nlohmann::json;

/// Everything needed to re-run an experiment. A snapshot of this is written
/// next to its outputs.
struct ExperimentSpec {
  std::string name = "desk";
  env::EnvConfig env = desk_env();
  trainer::TrainConfig train = desk_train();
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::vector<mixers::MixerKind> mixers{mixers::MixerKind::vdn, mixers::MixerKind::qmix,
                                        mixers::MixerKind::kmarl};
  std::vector<std::size_t> vehicle_counts{4, 8, 12};
  /// Held-out evaluation episodes use seeds derived from this base, disjoint
  /// from the training streams.
  std::size_t eval_episodes = 20;
  std::uint64_t eval_seed = 7919;
  /// Vehicle count of the KMARL model reused across every count in a sweep.
  std::size_t transfer_count = 8;
  bool retrain_per_count = true;
  std::size_t monotonicity_samples = 1000;
  /// Baselines enumerate joint actions only up to this many per slot.
  std::uint64_t exact_cap = 100000;
  std::size_t jobs = 1;

  static env::EnvConfig desk_env() {
    env::EnvConfig c = env::make_config(8, 2);
    c.horizon = 50;
    return c;
  }

  static trainer::TrainConfig desk_train() {
    trainer::TrainConfig t;
    t.checkpoint_every = 1000;
    return t;
  }

  void validate() const {
    env.validate();
    train.validate();
    if (seeds.empty()) throw std::invalid_argument("seeds: must be nonempty");
    if (mixers.empty()) throw std::invalid_argument("mixers: must be nonempty");
    if (vehicle_counts.empty()) throw std::invalid_argument("vehicle_counts: must be nonempty");
    for (std::size_t n : vehicle_counts)
      if (n == 0) throw std::invalid_argument("vehicle_counts: entries must be positive");
    if (transfer_count == 0) throw std::invalid_argument("transfer_count: must be positive");
    if (jobs == 0) throw std::invalid_argument("jobs: must be positive");
  }
};

/// One configuration key: its JSON accessors plus documentation.
struct ConfigField {
  std::string section;
  std::string key;
  std::string type;
  std::string mirrors;  // parameter-table entry it reproduces, if any
  std::function<json(const ExperimentSpec&)> get;
  std::function<void(ExperimentSpec&, const json&)> set;
};

namespace detail {

inline std::string activation_name(num::Activation a) {
  switch (a) {
    case num::Activation::relu: return "relu";
    case num::Activation::elu: return "elu";
    case num::Activation::abs: return "abs";
    case num::Activation::identity: return "identity";
  }
  return "?";
}

inline num::Activation parse_activation(const std::string& s) {
  for (auto a : {num::Activation::relu, num::Activation::elu, num::Activation::abs,
                 num::Activation::identity})
    if (activation_name(a) == s) return a;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

inline std::string pooling_name(num::Reduce r) {
  return r == num::Reduce::max_rows ? "max" : "mean";
}

inline num::Reduce parse_pooling(const std::string& s) {
  if (s == "mean") return num::Reduce::mean_rows;
  if (s == "max") return num::Reduce::max_rows;
  throw std::invalid_argument("unknown pooling '" + s + "' (expected mean or max)");
}

template <typename T, typename Owner>
ConfigField plain(std::string section, std::string key, std::string type, T Owner::*member,
                  Owner ExperimentSpec::*owner, std::string mirrors = "") {
  return {std::move(section), std::move(key), std::move(type), std::move(mirrors),
          [=](const ExperimentSpec& s) { return json((s.*owner).*member); },
          [=](ExperimentSpec& s, const json& j) { (s.*owner).*member = j.get<T>(); }};
}

template <typename T>
ConfigField top(std::string key, std::string type, T ExperimentSpec::*member) {
  return {"experiment", std::move(key), std::move(type), "",
          [=](const ExperimentSpec& s) { return json(s.*member); },
          [=](ExperimentSpec& s, const json& j) { s.*member = j.get<T>(); }};
}

inline json point_json(const env::Point& p) { return json::array({p.x, p.y}); }
inline env::Point point_from(const json& j) {
  if (!j.is_array() || j.size() != 2) throw std::invalid_argument("expected [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}

inline json range_json(const std::pair<double, double>& r) { return json::array({r.first, r.second}); }
inline std::pair<double, double> range_from(const json& j) {
  if (!j.is_array() || j.size() != 2) throw std::invalid_argument("expected [lower, upper]");
  return {j[0].get<double>(), j[1].get<double>()};
}

}  // namespace detail

/// The full schema, in documentation order.
inline const std::vector<ConfigField>& config_fields() {
  using detail::plain;
  using detail::top;
  using E = env::EnvConfig;
  using T = trainer::TrainConfig;
  constexpr auto env = &ExperimentSpec::env;
  constexpr auto tr = &ExperimentSpec::train;
  static const std::vector<ConfigField> fields = [] {
    std::vector<ConfigField> f;
    f.push_back(top("name", "string", &ExperimentSpec::name));
    f.push_back({"experiment", "seeds", "list<uint64>", "",
                 [](const ExperimentSpec& s) { return json(s.seeds); },
                 [](ExperimentSpec& s, const json& j) { s.seeds = j.get<std::vector<std::uint64_t>>(); }});
    f.push_back({"experiment", "mixers", "list<vdn|qmix|kmarl>", "",
                 [](const ExperimentSpec& s) {
                   json a = json::array();
                   for (auto k : s.mixers) a.push_back(mixers::to_string(k));
                   return a;
                 },
                 [](ExperimentSpec& s, const json& j) {
                   s.mixers.clear();
                   for (const auto& k : j) s.mixers.push_back(mixers::parse_mixer_kind(k.get<std::string>()));
                 }});
    f.push_back({"experiment", "vehicle_counts", "list<size>", "",
                 [](const ExperimentSpec& s) { return json(s.vehicle_counts); },
                 [](ExperimentSpec& s, const json& j) {
                   s.vehicle_counts = j.get<std::vector<std::size_t>>();
                 }});
    f.push_back(top("eval_episodes", "size", &ExperimentSpec::eval_episodes));
    f.push_back(top("eval_seed", "uint64", &ExperimentSpec::eval_seed));
    f.push_back(top("transfer_count", "size", &ExperimentSpec::transfer_count));
    f.push_back(top("retrain_per_count", "bool", &ExperimentSpec::retrain_per_count));
    f.push_back(top("monotonicity_samples", "size", &ExperimentSpec::monotonicity_samples));
    f.push_back(top("exact_cap", "uint64", &ExperimentSpec::exact_cap));
    f.push_back(top("jobs", "size", &ExperimentSpec::jobs));

    f.push_back(plain("env", "num_vehicles", "size", &E::num_vehicles, env));
    f.push_back(plain("env", "num_rsus", "size", &E::num_rsus, env));
    f.push_back(plain("env", "horizon", "size", &E::horizon, env));
    f.push_back(plain("env", "road_length", "double", &E::road_length, env));
    f.push_back({"env", "rsu_positions", "list<[x,y]>", "",
                 [](const ExperimentSpec& s) {
                   json a = json::array();
                   for (const auto& p : s.env.rsu_positions) a.push_back(detail::point_json(p));
                   return a;
                 },
                 [](ExperimentSpec& s, const json& j) {
                   s.env.rsu_positions.clear();
                   for (const auto& p : j) s.env.rsu_positions.push_back(detail::point_from(p));
                 }});
    f.push_back({"env", "mbs_position", "[x,y]", "",
                 [](const ExperimentSpec& s) { return detail::point_json(s.env.mbs_position); },
                 [](ExperimentSpec& s, const json& j) { s.env.mbs_position = detail::point_from(j); }});
    f.push_back(plain("env", "vehicle_cpu", "double", &E::vehicle_cpu, env, "CPU cycle of vehicle F_i"));
    f.push_back(plain("env", "rsu_cpu", "double", &E::rsu_cpu, env, "CPU cycle of RSU F_R"));
    f.push_back(plain("env", "mbs_cpu", "double", &E::mbs_cpu, env, "CPU cycle of MBS F_MBS"));
    f.push_back(plain("env", "rsu_bandwidth", "double", &E::rsu_bandwidth, env,
                      "Bandwidth of vehicle to RSU channel B_RSU"));
    f.push_back(plain("env", "mbs_bandwidth", "double", &E::mbs_bandwidth, env,
                      "Bandwidth of vehicle to MBS channel B_MBS"));
    f.push_back(plain("env", "transmit_power", "double", &E::transmit_power, env, "transmit power 20 dBm"));
    f.push_back(plain("env", "noise_power", "double", &E::noise_power, env));
    f.push_back(plain("env", "task_sizes", "list<double>", &E::task_sizes, env, "task size set {1, 1.5, 2} Mbit"));
    f.push_back({"env", "rho_range", "[lower,upper]", "demand per Mbit range [100, 200]",
                 [](const ExperimentSpec& s) { return detail::range_json(s.env.rho_range); },
                 [](ExperimentSpec& s, const json& j) { s.env.rho_range = detail::range_from(j); }});
    f.push_back(plain("env", "penalty_coefficient", "double", &E::penalty_coefficient, env));
    f.push_back(plain("env", "adjacency_range", "double", &E::adjacency_range, env));
    f.push_back({"env", "speed_range", "[lower,upper]", "",
                 [](const ExperimentSpec& s) { return detail::range_json(s.env.speed_range); },
                 [](ExperimentSpec& s, const json& j) { s.env.speed_range = detail::range_from(j); }});
    f.push_back(plain("env", "lane_offsets", "list<double>", &E::lane_offsets, env));
    f.push_back(plain("env", "rsu_offset", "double", &E::rsu_offset, env));
    f.push_back(plain("env", "rayleigh_fading", "bool", &E::rayleigh_fading, env));
    f.push_back(plain("env", "rng_seed", "uint64", &E::rng_seed, env));

    f.push_back(plain("train", "gamma", "double", &T::gamma, tr, "Discount factor 0.9"));
    f.push_back(plain("train", "learning_rate", "double", &T::learning_rate, tr, "Learning rate 1e-4"));
    f.push_back(plain("train", "batch_size", "size", &T::batch_size, tr, "Batch size 64"));
    f.push_back(plain("train", "buffer_capacity", "size", &T::buffer_capacity, tr,
                      "Experience replay buffer size 2000"));
    f.push_back(plain("train", "target_sync_interval", "size", &T::target_sync_interval, tr));
    f.push_back(plain("train", "episodes", "size", &T::episodes, tr));
    f.push_back({"train", "epsilon_start", "double", "",
                 [](const ExperimentSpec& s) { return json(s.train.epsilon.start); },
                 [](ExperimentSpec& s, const json& j) { s.train.epsilon.start = j.get<double>(); }});
    f.push_back({"train", "epsilon_end", "double", "",
                 [](const ExperimentSpec& s) { return json(s.train.epsilon.end); },
                 [](ExperimentSpec& s, const json& j) { s.train.epsilon.end = j.get<double>(); }});
    f.push_back({"train", "epsilon_fraction", "double", "",
                 [](const ExperimentSpec& s) { return json(s.train.epsilon.fraction); },
                 [](ExperimentSpec& s, const json& j) { s.train.epsilon.fraction = j.get<double>(); }});
    f.push_back({"train", "agent_hidden", "list<size>", "",
                 [](const ExperimentSpec& s) { return json(s.train.agent.hidden); },
                 [](ExperimentSpec& s, const json& j) {
                   s.train.agent.hidden = j.get<std::vector<std::size_t>>();
                 }});
    f.push_back({"train", "agent_activation", "relu|elu|abs|identity", "",
                 [](const ExperimentSpec& s) { return json(detail::activation_name(s.train.agent.activation)); },
                 [](ExperimentSpec& s, const json& j) {
                   s.train.agent.activation = detail::parse_activation(j.get<std::string>());
                 }});
    f.push_back({"train", "stack_depth", "size", "",
                 [](const ExperimentSpec& s) { return json(s.train.agent.stack_depth); },
                 [](ExperimentSpec& s, const json& j) { s.train.agent.stack_depth = j.get<std::size_t>(); }});
    f.push_back({"train", "mixer", "vdn|qmix|kmarl", "",
                 [](const ExperimentSpec& s) { return json(mixers::to_string(s.train.mixer.kind)); },
                 [](ExperimentSpec& s, const json& j) {
                   s.train.mixer.kind = mixers::parse_mixer_kind(j.get<std::string>());
                 }});
    f.push_back({"train", "mixer_hidden", "size", "",
                 [](const ExperimentSpec& s) { return json(s.train.mixer.hidden); },
                 [](ExperimentSpec& s, const json& j) { s.train.mixer.hidden = j.get<std::size_t>(); }});
    f.push_back({"train", "gnn_layers", "size", "",
                 [](const ExperimentSpec& s) { return json(s.train.mixer.gnn.layers); },
                 [](ExperimentSpec& s, const json& j) { s.train.mixer.gnn.layers = j.get<std::size_t>(); }});
    f.push_back({"train", "gnn_width", "size", "",
                 [](const ExperimentSpec& s) { return json(s.train.mixer.gnn.width); },
                 [](ExperimentSpec& s, const json& j) { s.train.mixer.gnn.width = j.get<std::size_t>(); }});
    f.push_back({"train", "gnn_pooling", "mean|max", "",
                 [](const ExperimentSpec& s) { return json(detail::pooling_name(s.train.mixer.gnn.pooling)); },
                 [](ExperimentSpec& s, const json& j) {
                   s.train.mixer.gnn.pooling = detail::parse_pooling(j.get<std::string>());
                 }});
    f.push_back(plain("train", "rms_decay", "double", &T::rms_decay, tr));
    f.push_back(plain("train", "rms_epsilon", "double", &T::rms_epsilon, tr));
    f.push_back(plain("train", "reward_scale", "double", &T::reward_scale, tr));
    f.push_back(plain("train", "updates_per_episode", "size", &T::updates_per_episode, tr));
    f.push_back(plain("train", "smoothing_window", "size", &T::smoothing_window, tr));
    f.push_back(plain("train", "checkpoint_every", "size", &T::checkpoint_every, tr));
    f.push_back(plain("train", "record_wall_time", "bool", &T::record_wall_time, tr));
    f.push_back(plain("train", "seed", "uint64", &T::seed, tr));
    return f;
  }();
  return fields;
}

inline json to_json(const ExperimentSpec& spec) {
  json j = json::object();
  for (const ConfigField& f : config_fields()) {
    if (f.section == "experiment") {
      j[f.key] = f.get(spec);
    } else {
      j[f.section][f.key] = f.get(spec);
    }
  }
  return j;
}

/// Starts from the defaults and applies every key present. Unknown keys are
/// errors. RSUs are auto-placed when rsu_positions is absent or empty.
inline ExperimentSpec from_json(const json& j) {
  ExperimentSpec spec;
  if (!j.is_object()) throw std::invalid_argument("config: top level must be an object");
  std::set<std::string> env_keys;
  auto apply = [&](const std::string& section, const json& obj) {
    for (const auto& [key, value] : obj.items()) {
      const ConfigField* match = nullptr;
      for (const ConfigField& f : config_fields())
        if (f.section == section && f.key == key) match = &f;
      if (!match) throw std::invalid_argument("config: unknown key '" + section + "." + key + "'");
      try {
        match->set(spec, value);
      } catch (const std::exception& e) {
        throw std::invalid_argument("config: bad value for '" + section + "." + key + "': " + e.what());
      }
      if (section == "env") env_keys.insert(key);
    }
  };
  for (const auto& [key, value] : j.items()) {
    if (key == "env" || key == "train") {
      if (!value.is_object()) throw std::invalid_argument("config: '" + key + "' must be an object");
      apply(key, value);
    } else {
      apply("experiment", json::object({{key, value}}));
    }
  }
  if (!env_keys.count("rsu_positions") || spec.env.rsu_positions.empty()) {
    const env::Point mbs = spec.env.mbs_position;
    spec.env.place_infrastructure();
    if (env_keys.count("mbs_position")) spec.env.mbs_position = mbs;
  }
  spec.validate();
  return spec;
}

inline ExperimentSpec load_spec(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

inline void save_spec(const std::filesystem::path& path, const ExperimentSpec& spec) {
  write_text(path, to_json(spec).dump(2) + "\n");
}

/// One line per key: section.key, type, default, and the parameter-table
/// entry it mirrors when there is one.
inline std::string describe_config() {
  const ExperimentSpec defaults;
  std::string out;
  for (const ConfigField& f : config_fields()) {
    const std::string path = f.section == "experiment" ? f.key : f.section + "." + f.key;
    out += path + "  (" + f.type + ")  default " + f.get(defaults).dump();
    if (!f.mirrors.empty()) out += "  [table: " + f.mirrors + "]";
    out += "\n";
  }
  return out;
}

}  // namespace kmarl::harness
