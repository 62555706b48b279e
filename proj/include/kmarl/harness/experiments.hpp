#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "kmarl/harness/config_io.hpp"
#include "kmarl/harness/csv.hpp"
#include "kmarl/harness/svg.hpp"
#include "kmarl/oracle/oracle.hpp"
#include "kmarl/trainer/trainer.hpp"

namespace kmarl::harness {

namespace fs = std::filesystem;
using mixers::MixerKind;

/// Outcome of training one (mixer, seed, vehicle count) cell.
struct CellResult {
  MixerKind mixer = MixerKind::vdn;
  std::uint64_t seed = 0;
  std::size_t agents = 0;
  bool ok = false;
  std::string error;
  fs::path dir;
  fs::path checkpoint;
  double final_smoothed_return = NAN;
  /// (episode, most negative partial); episode 0 is the initialization.
  std::vector<std::pair<std::size_t, double>> monotonicity;
  std::vector<trainer::MetricRow> metrics;

  std::string label() const {
    return mixers::to_string(mixer) + " seed " + std::to_string(seed) + " (I=" +
           std::to_string(agents) + ")";
  }

  double worst_monotonicity() const {
    double w = INFINITY;
    for (const auto& [ep, v] : monotonicity) w = std::min(w, v);
    return w;
  }
};

inline std::string cell_name(MixerKind m, std::uint64_t seed) {
  return mixers::to_string(m) + "_seed" + std::to_string(seed);
}

inline CsvTable metrics_table(const std::vector<trainer::MetricRow>& rows) {
  CsvTable t;
  t.header = {"episode", "return", "smoothed_return", "loss", "epsilon", "mean_latency", "wall_ms"};
  for (const auto& r : rows) {
    t.add_row({std::to_string(r.episode), format_number(r.episode_return),
               format_number(r.smoothed_return), format_number(r.loss), format_number(r.epsilon),
               format_number(r.mean_latency), format_number(r.wall_ms)});
  }
  return t;
}

/// Runs `count` independent tasks on up to `jobs` threads. Each task must
/// only touch its own state; results are collected by index.
inline void run_parallel(std::size_t count, std::size_t jobs,
                         const std::function<void(std::size_t)>& task) {
  if (jobs <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(jobs, count); ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) task(i);
    });
  }
  for (auto& t : pool) t.join();
}

/// Trains one cell and writes metrics.csv, monotonicity.csv and one
/// checkpoint per checkpoint episode (plus final.ckpt) under `dir`.
/// Failures are captured in the result rather than thrown.
inline CellResult train_cell(const ExperimentSpec& spec, const env::EnvConfig& env_cfg,
                             MixerKind mixer, std::uint64_t seed, const fs::path& dir) {
  CellResult cell;
  cell.mixer = mixer;
  cell.seed = seed;
  cell.agents = env_cfg.num_vehicles;
  cell.dir = dir;
  try {
    trainer::TrainConfig tc = spec.train;
    tc.mixer.kind = mixer;
    tc.seed = seed;
    using T = trainer::Trainer<env::Environment>;
    T tr(env::Environment(env_cfg), tc);
    fs::create_directories(dir / "checkpoints");

    const bool monotone_kind = mixer != MixerKind::vdn;
    auto check = [&](T& t, std::size_t episode) {
      if (!monotone_kind || spec.monotonicity_samples == 0) return;
      Rng rng(mix_seed(seed, 301 + episode));
      cell.monotonicity.emplace_back(
          episode, mixers::monotonicity_check(t.online().mixer, spec.monotonicity_samples,
                                              env_cfg.num_vehicles, rng));
    };
    check(tr, 0);
    cell.metrics = tr.train([&](T& t, std::size_t episode) {
      const fs::path path = dir / "checkpoints" / ("episode_" + std::to_string(episode) + ".ckpt");
      t.save_checkpoint(path, episode);
      check(t, episode);
    });
    cell.checkpoint = dir / "final.ckpt";
    tr.save_checkpoint(cell.checkpoint, tc.episodes);
    write_csv(dir / "metrics.csv", metrics_table(cell.metrics));
    CsvTable mono;
    mono.header = {"episode", "min_partial"};
    for (const auto& [ep, v] : cell.monotonicity) mono.add_row({std::to_string(ep), format_number(v)});
    write_csv(dir / "monotonicity.csv", mono);
    cell.final_smoothed_return =
        cell.metrics.empty() ? NAN : cell.metrics.back().smoothed_return;
    cell.ok = true;
  } catch (const std::exception& e) {
    cell.ok = false;
    cell.error = e.what();
  }
  return cell;
}

/// Rebuilds the shared agent network from a checkpoint.
inline agents::AgentNet load_agent(const fs::path& checkpoint, const agents::AgentConfig& agent_cfg) {
  const num::Checkpoint ck = num::load_checkpoint(checkpoint);
  auto header = [&](const std::string& k) {
    auto it = ck.header.find(k);
    if (it == ck.header.end()) throw std::runtime_error(checkpoint.string() + ": header lacks " + k);
    return std::stoul(it->second);
  };
  agents::AgentConfig cfg = agent_cfg;
  cfg.stack_depth = header("stack_depth");
  Rng unused(0);
  agents::AgentNet net(header("num_actions"), cfg, unused);
  auto params = net.params();
  num::restore(ck, params);
  return net;
}

inline oracle::Policy checkpoint_policy(const fs::path& checkpoint, const agents::AgentConfig& cfg) {
  agents::AgentNet net = load_agent(checkpoint, cfg);
  const std::size_t depth = net.input_dim() / env::kObservationDim;
  return trainer::learned_policy(std::move(net), depth);
}

/// Mean per-slot latency of one episode started from `reset_seed`.
inline double episode_latency(const oracle::Policy& policy, const env::EnvConfig& cfg,
                              std::uint64_t reset_seed) {
  env::Environment world(cfg);
  world.reset(reset_seed);
  double sum = 0.0;
  std::size_t slots = 0;
  while (!world.done()) {
    sum += world.step(policy(world)).outcome.mean_latency();
    ++slots;
  }
  return sum / static_cast<double>(slots);
}

inline std::uint64_t eval_seed_for(const ExperimentSpec& spec, std::size_t count) {
  return mix_seed(spec.eval_seed, 1000 + count);
}

inline bool exact_feasible(const env::EnvConfig& cfg, std::uint64_t cap) {
  return oracle::joint_action_count(cfg.num_vehicles, cfg.num_actions(), cap) <= cap;
}

// ---------------------------------------------------------------- convergence

struct ConvergenceResult {
  std::vector<CellResult> cells;
  std::vector<std::string> failures;
  std::map<std::pair<MixerKind, std::uint64_t>, double> eval_latency;
};

/// Trains every (mixer, seed) on the spec's environment and writes per-cell
/// outputs, curves.csv/svg (seed-averaged smoothed return per mixer) and
/// summary.csv.
inline ConvergenceResult run_convergence(const ExperimentSpec& spec, const fs::path& out) {
  spec.validate();
  fs::create_directories(out);
  save_spec(out / "spec.json", spec);

  std::vector<std::pair<MixerKind, std::uint64_t>> grid;
  for (MixerKind m : spec.mixers)
    for (std::uint64_t s : spec.seeds) grid.emplace_back(m, s);
  ConvergenceResult result;
  result.cells.resize(grid.size());
  std::vector<double> latency(grid.size(), NAN);
  run_parallel(grid.size(), spec.jobs, [&](std::size_t i) {
    const auto [m, s] = grid[i];
    CellResult& cell = result.cells[i];
    cell = train_cell(spec, spec.env, m, s, out / cell_name(m, s));
    if (!cell.ok) return;
    try {
      const auto policy = checkpoint_policy(cell.checkpoint, spec.train.agent);
      latency[i] = oracle::evaluate_policy(policy, spec.eval_episodes, spec.env,
                                           eval_seed_for(spec, spec.env.num_vehicles))
                       .mean_latency;
    } catch (const std::exception& e) {
      cell.ok = false;
      cell.error = std::string("evaluation: ") + e.what();
    }
  });

  CsvTable summary;
  summary.header = {"mixer", "seed", "status", "final_smoothed_return", "min_monotonicity",
                    "eval_mean_latency"};
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const CellResult& c = result.cells[i];
    if (!c.ok) result.failures.push_back(c.label() + ": " + c.error);
    result.eval_latency[grid[i]] = latency[i];
    const double mono = c.monotonicity.empty() ? NAN : c.worst_monotonicity();
    summary.add_row({mixers::to_string(c.mixer), std::to_string(c.seed), c.ok ? "ok" : "failed",
                     format_number(c.final_smoothed_return), format_number(mono),
                     format_number(latency[i])});
  }
  write_csv(out / "summary.csv", summary);

  CsvTable curves;
  curves.header = {"episode"};
  for (MixerKind m : spec.mixers) curves.header.push_back(mixers::to_string(m));
  for (std::size_t e = 0; e < spec.train.episodes; ++e) {
    std::vector<std::string> row{std::to_string(e)};
    for (MixerKind m : spec.mixers) {
      double sum = 0.0;
      std::size_t n = 0;
      for (const CellResult& c : result.cells) {
        if (c.mixer == m && c.ok && e < c.metrics.size()) {
          sum += c.metrics[e].smoothed_return;
          ++n;
        }
      }
      row.push_back(n ? format_number(sum / static_cast<double>(n)) : "");
    }
    curves.add_row(std::move(row));
  }
  write_csv(out / "curves.csv", curves);
  write_text(out / "curves.svg",
             render_line_chart(curves));
  return result;
}

// ---------------------------------------------------------------- scalability

struct ScalabilityResult {
  std::vector<CellResult> cells;  // cells trained here (pretrained ones excluded)
  std::vector<std::string> failures;
  /// (count, method) -> per-seed mean latency; baselines use seed 0.
  std::map<std::pair<std::size_t, std::string>, std::map<std::uint64_t, double>> latency;

  /// Seed-averaged latency, NaN when absent.
  double mean(std::size_t count, const std::string& method) const {
    auto it = latency.find({count, method});
    if (it == latency.end() || it->second.empty()) return NAN;
    double s = 0.0;
    for (const auto& [seed, v] : it->second) s += v;
    return s / static_cast<double>(it->second.size());
  }
};

/// Columns of latency.csv after "count".
inline std::vector<std::string> scalability_methods(const ExperimentSpec& spec) {
  std::vector<std::string> m{"local", "greedy", "exact"};
  if (spec.retrain_per_count)
    for (MixerKind k : spec.mixers) m.push_back(mixers::to_string(k));
  m.push_back("kmarl_transfer");
  return m;
}

/// For every vehicle count: evaluates the oracle baselines, one model per
/// (mixer, seed) trained at that count (when retrain_per_count), and the
/// KMARL model trained at transfer_count applied unchanged. `pretrained`
/// cells matching a (count, mixer, seed) are reused instead of retrained.
inline ScalabilityResult run_scalability(const ExperimentSpec& spec, const fs::path& out,
                                         const std::vector<CellResult>& pretrained = {}) {
  spec.validate();
  fs::create_directories(out);
  save_spec(out / "spec.json", spec);
  ScalabilityResult result;

  auto env_for = [&](std::size_t count) {
    env::EnvConfig c = spec.env;
    c.num_vehicles = count;
    return c;
  };
  auto find_pretrained = [&](std::size_t count, MixerKind m, std::uint64_t s) -> const CellResult* {
    for (const CellResult& c : pretrained)
      if (c.ok && c.agents == count && c.mixer == m && c.seed == s) return &c;
    return nullptr;
  };

  struct Job {
    std::size_t count;
    MixerKind mixer;
    std::uint64_t seed;
    bool transfer;
  };
  std::vector<Job> jobs;
  if (spec.retrain_per_count)
    for (std::size_t n : spec.vehicle_counts)
      for (MixerKind m : spec.mixers)
        for (std::uint64_t s : spec.seeds) jobs.push_back({n, m, s, false});
  for (std::uint64_t s : spec.seeds) {
    const bool covered = spec.retrain_per_count &&
                         std::count(spec.vehicle_counts.begin(), spec.vehicle_counts.end(),
                                    spec.transfer_count) &&
                         std::count(spec.mixers.begin(), spec.mixers.end(), MixerKind::kmarl);
    if (!covered) jobs.push_back({spec.transfer_count, MixerKind::kmarl, s, true});
  }

  std::vector<CellResult> cells(jobs.size());
  std::vector<char> trained_here(jobs.size(), 0);
  run_parallel(jobs.size(), spec.jobs, [&](std::size_t i) {
    const Job& j = jobs[i];
    if (const CellResult* p = find_pretrained(j.count, j.mixer, j.seed)) {
      cells[i] = *p;
      return;
    }
    const fs::path dir = out / (j.transfer ? std::string("transfer") : "count" + std::to_string(j.count)) /
                         cell_name(j.mixer, j.seed);
    cells[i] = train_cell(spec, env_for(j.count), j.mixer, j.seed, dir);
    trained_here[i] = 1;
  });
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (!cells[i].ok) result.failures.push_back(cells[i].label() + ": " + cells[i].error);
    if (trained_here[i]) result.cells.push_back(cells[i]);
  }
  auto cell_for = [&](std::size_t count, MixerKind m, std::uint64_t s) -> const CellResult* {
    for (std::size_t i = 0; i < jobs.size(); ++i)
      if (cells[i].ok && jobs[i].count == count && jobs[i].mixer == m && jobs[i].seed == s) return &cells[i];
    return nullptr;
  };

  // Evaluation tasks: one per (count, method, seed).
  struct Eval {
    std::size_t count;
    std::string method;
    std::uint64_t seed;
    std::function<oracle::Policy()> policy;
  };
  std::vector<Eval> evals;
  for (std::size_t n : spec.vehicle_counts) {
    evals.push_back({n, "local", 0, [] { return oracle::always_local_policy(); }});
    evals.push_back({n, "greedy", 0, [] { return oracle::greedy_policy(); }});
    if (exact_feasible(env_for(n), spec.exact_cap)) {
      const std::uint64_t cap = spec.exact_cap;
      evals.push_back({n, "exact", 0, [cap] { return oracle::exact_policy(cap); }});
    }
    for (std::uint64_t s : spec.seeds) {
      if (spec.retrain_per_count) {
        for (MixerKind m : spec.mixers) {
          if (const CellResult* c = cell_for(n, m, s)) {
            const fs::path ck = c->checkpoint;
            evals.push_back({n, mixers::to_string(m), s,
                             [ck, &spec] { return checkpoint_policy(ck, spec.train.agent); }});
          }
        }
      }
      if (const CellResult* c = cell_for(spec.transfer_count, MixerKind::kmarl, s)) {
        const fs::path ck = c->checkpoint;
        evals.push_back({n, "kmarl_transfer", s,
                         [ck, &spec] { return checkpoint_policy(ck, spec.train.agent); }});
      }
    }
  }
  std::vector<double> values(evals.size(), NAN);
  std::vector<std::string> errors(evals.size());
  run_parallel(evals.size(), spec.jobs, [&](std::size_t i) {
    try {
      values[i] = oracle::evaluate_policy(evals[i].policy(), spec.eval_episodes,
                                          env_for(evals[i].count), eval_seed_for(spec, evals[i].count))
                      .mean_latency;
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  CsvTable by_seed;
  by_seed.header = {"count", "method", "seed", "mean_latency"};
  for (std::size_t i = 0; i < evals.size(); ++i) {
    if (!errors[i].empty()) {
      result.failures.push_back("evaluate " + evals[i].method + " seed " + std::to_string(evals[i].seed) +
                                " at I=" + std::to_string(evals[i].count) + ": " + errors[i]);
      continue;
    }
    result.latency[{evals[i].count, evals[i].method}][evals[i].seed] = values[i];
    by_seed.add_row({std::to_string(evals[i].count), evals[i].method, std::to_string(evals[i].seed),
                     format_number(values[i])});
  }
  write_csv(out / "latency_by_seed.csv", by_seed);

  CsvTable table;
  table.header = {"count"};
  const auto methods = scalability_methods(spec);
  for (const auto& m : methods) table.header.push_back(m);
  for (std::size_t n : spec.vehicle_counts) {
    std::vector<std::string> row{std::to_string(n)};
    for (const auto& m : methods) row.push_back(format_number(result.mean(n, m)));
    table.add_row(std::move(row));
  }
  write_csv(out / "latency.csv", table);
  write_text(out / "latency.svg",
             render_line_chart(table));
  return result;
}

// ----------------------------------------------------------------- oracle gap

struct OracleGapResult {
  double exact = NAN;
  double greedy = NAN;
  double learned = NAN;  // NaN without a checkpoint
  double greedy_gap() const { return greedy / exact - 1.0; }
  double learned_gap() const { return learned / exact - 1.0; }
};

/// Per held-out episode: exact optimum, greedy heuristic and (optionally) a
/// learned policy, each as mean per-slot latency, with relative gaps to the
/// optimum. Writes oracle_gap.csv with a final "mean" row.
inline OracleGapResult run_oracle_gap(const ExperimentSpec& spec, const std::optional<fs::path>& checkpoint,
                                      const fs::path& out) {
  spec.validate();
  const env::EnvConfig& cfg = spec.env;
  if (!exact_feasible(cfg, spec.exact_cap)) {
    throw oracle::EnumerationCapExceeded("oracle-gap: " + std::to_string(cfg.num_actions()) + "^" +
                                         std::to_string(cfg.num_vehicles) +
                                         " joint actions per slot exceed exact_cap");
  }
  std::optional<oracle::Policy> learned;
  if (checkpoint) learned = checkpoint_policy(*checkpoint, spec.train.agent);
  const auto exact = oracle::exact_policy(spec.exact_cap);
  const auto greedy = oracle::greedy_policy();
  const std::uint64_t base = eval_seed_for(spec, cfg.num_vehicles);

  CsvTable t;
  t.header = {"instance_seed", "exact", "greedy", "learned", "greedy_gap", "learned_gap"};
  OracleGapResult sum{0.0, 0.0, learned ? 0.0 : NAN};
  for (std::size_t e = 0; e < spec.eval_episodes; ++e) {
    const std::uint64_t seed = mix_seed(base, e);
    OracleGapResult r;
    r.exact = episode_latency(exact, cfg, seed);
    r.greedy = episode_latency(greedy, cfg, seed);
    if (learned) r.learned = episode_latency(*learned, cfg, seed);
    sum.exact += r.exact;
    sum.greedy += r.greedy;
    sum.learned += r.learned;
    t.add_row({std::to_string(seed), format_number(r.exact), format_number(r.greedy),
               format_number(r.learned), format_number(r.greedy_gap()),
               format_number(learned ? r.learned_gap() : NAN)});
  }
  const double n = static_cast<double>(spec.eval_episodes);
  OracleGapResult mean{sum.exact / n, sum.greedy / n, sum.learned / n};
  t.add_row({"mean", format_number(mean.exact), format_number(mean.greedy), format_number(mean.learned),
             format_number(mean.greedy_gap()), format_number(learned ? mean.learned_gap() : NAN)});
  write_csv(out / "oracle_gap.csv", t);
  return mean;
}

// ------------------------------------------------------------------- evaluate

/// Mean latency of a checkpoint's policy and the baselines at the spec's
/// vehicle count; writes evaluation.csv.
inline CsvTable evaluate_checkpoint(const ExperimentSpec& spec, const fs::path& checkpoint,
                                    const fs::path& out) {
  spec.validate();
  const env::EnvConfig& cfg = spec.env;
  const std::uint64_t seed = eval_seed_for(spec, cfg.num_vehicles);
  std::vector<std::pair<std::string, oracle::Policy>> methods{
      {"learned", checkpoint_policy(checkpoint, spec.train.agent)},
      {"local", oracle::always_local_policy()},
      {"greedy", oracle::greedy_policy()}};
  if (exact_feasible(cfg, spec.exact_cap)) methods.emplace_back("exact", oracle::exact_policy(spec.exact_cap));
  CsvTable t;
  t.header = {"method", "mean_latency", "mean_reward", "slots"};
  for (const auto& [name, policy] : methods) {
    const auto e = oracle::evaluate_policy(policy, spec.eval_episodes, cfg, seed);
    t.add_row({name, format_number(e.mean_latency), format_number(e.mean_reward), std::to_string(e.slots)});
  }
  write_csv(out / "evaluation.csv", t);
  return t;
}

/// Re-renders a chart from its CSV alone.
inline void render_csv(const fs::path& csv, const fs::path& svg) {
  write_text(svg, render_line_chart(read_csv(csv)));
}

}  // namespace kmarl::harness
