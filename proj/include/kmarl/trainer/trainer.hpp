#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "kmarl/agents/agent_net.hpp"
#include "kmarl/env/environment.hpp"
#include "kmarl/mixers/mixers.hpp"
#include "kmarl/numkit/checkpoint.hpp"
#include "kmarl/numkit/rmsprop.hpp"
#include "kmarl/oracle/oracle.hpp"
#include "kmarl/trainer/replay_buffer.hpp"

namespace kmarl::trainer {

using mixers::MixContext;
using mixers::Mixer;
using mixers::MixerKind;
using num::Param;
using num::Tape;
using num::Var;

/// What the trainer needs from a world.
template <typename W>
concept MultiAgentWorld = requires(W w, const W cw, const env::JointAction& a, std::uint64_t seed) {
  { cw.num_agents() } -> std::convertible_to<std::size_t>;
  { cw.num_actions() } -> std::convertible_to<std::size_t>;
  { cw.done() } -> std::convertible_to<bool>;
  { cw.observation_matrix() } -> std::convertible_to<num::Matrix>;
  { cw.adjacency_matrix() } -> std::convertible_to<num::Matrix>;
  w.reset(seed);
  { w.step(a) } -> std::convertible_to<env::StepResult>;
};

struct TrainConfig {
  double gamma = 0.9;
  double learning_rate = 1e-4;
  std::size_t batch_size = 64;
  std::size_t buffer_capacity = 2000;
  std::size_t target_sync_interval = 200;
  std::size_t episodes = 5000;
  agents::EpsilonSchedule epsilon{};
  agents::AgentConfig agent{};
  mixers::MixerConfig mixer{};
  double rms_decay = 0.99;
  double rms_epsilon = 1e-8;
  /// Rewards are multiplied by this before entering TD targets, so that
  /// sub-millisecond latencies give O(1) regression targets.
  double reward_scale = 1e4;
  std::size_t updates_per_episode = 1;
  std::size_t smoothing_window = 50;
  std::size_t checkpoint_every = 0;
  /// wall_ms is 0 unless enabled, keeping metric files byte-stable.
  bool record_wall_time = false;
  std::uint64_t seed = 1;

  void validate() const {
    auto fail = [](const std::string& field, const std::string& why) {
      throw std::invalid_argument(field + ": " + why);
    };
    if (gamma < 0.0 || gamma >= 1.0) fail("gamma", "must lie in [0, 1)");
    if (!(learning_rate > 0.0)) fail("learning_rate", "must be positive");
    if (batch_size == 0) fail("batch_size", "must be positive");
    if (buffer_capacity == 0) fail("buffer_capacity", "must be positive");
    if (batch_size > buffer_capacity) fail("batch_size", "exceeds buffer_capacity");
    if (target_sync_interval == 0) fail("target_sync_interval", "must be positive");
    if (smoothing_window == 0) fail("smoothing_window", "must be positive");
    if (!(reward_scale > 0.0)) fail("reward_scale", "must be positive");
  }
};

/// Agent network plus mixer; the trainable unit and its frozen target copy.
struct Learner {
  agents::AgentNet agent;
  Mixer mixer;

  std::vector<Param*> params() {
    std::vector<Param*> out = agent.params();
    for (Param* p : mixer.params()) out.push_back(p);
    return out;
  }
};

/// Agent and mixer initializations draw from separate streams, so two
/// learners with the same seed share identical agent networks whatever the
/// mixer kind.
inline Learner make_learner(std::size_t num_agents, std::size_t num_actions,
                            const agents::AgentConfig& agent_cfg,
                            const mixers::MixerConfig& mixer_cfg, std::uint64_t seed) {
  Rng agent_rng(mix_seed(seed, 101));
  Rng mixer_rng(mix_seed(seed, 102));
  return Learner{agents::AgentNet(num_actions, agent_cfg, agent_rng),
                 Mixer(num_agents, mixer_cfg, mixer_rng)};
}

/// Batch tensors gathered from transitions.
struct BatchView {
  std::size_t batch = 0;
  std::size_t agents = 0;
  num::Matrix inputs;  // (B*N) x in
  MixContext context;
  std::vector<std::size_t> actions;  // B*N
  std::vector<double> rewards;
  std::vector<bool> done;
};

inline BatchView gather(std::span<const Transition* const> batch, bool next) {
  if (batch.empty()) throw std::invalid_argument("gather: empty batch");
  BatchView v;
  v.batch = batch.size();
  v.agents = batch.front()->observations.rows();
  const std::size_t n = v.agents;
  const std::size_t in_dim = batch.front()->inputs.cols();
  const std::size_t obs_dim = batch.front()->observations.cols();
  v.inputs = num::Matrix(v.batch * n, in_dim);
  v.context.batch = v.batch;
  v.context.agents = n;
  v.context.node_features = num::Matrix(v.batch * n, obs_dim);
  v.context.adjacency = num::Matrix(v.batch * n, n);
  for (std::size_t b = 0; b < v.batch; ++b) {
    const Transition& t = *batch[b];
    const num::Matrix& in = next ? t.next_inputs : t.inputs;
    const num::Matrix& obs = next ? t.next_observations : t.observations;
    const num::Matrix& adj = next ? t.next_adjacency : t.adjacency;
    std::copy(in.data(), in.data() + in.size(), v.inputs.data() + b * n * in_dim);
    std::copy(obs.data(), obs.data() + obs.size(), v.context.node_features.data() + b * n * obs_dim);
    std::copy(adj.data(), adj.data() + adj.size(), v.context.adjacency.data() + b * n * n);
    v.actions.insert(v.actions.end(), t.actions.begin(), t.actions.end());
    v.rewards.push_back(t.reward);
    v.done.push_back(t.done);
  }
  return v;
}

/// y = scale*r + gamma * Q_tot'(greedy target utilities), or scale*r when done.
/// Evaluated without gradient recording.
inline std::vector<double> td_targets(std::span<const Transition* const> batch, Learner& target,
                                      double gamma, double reward_scale = 1.0) {
  const BatchView next = gather(batch, true);
  const num::Matrix q = target.agent.q_matrix(next.inputs);
  num::Matrix best(next.batch, next.agents);
  for (std::size_t r = 0; r < q.rows(); ++r) {
    double m = q(r, 0);
    for (std::size_t c = 1; c < q.cols(); ++c) m = std::max(m, q(r, c));
    best[r] = m;
  }
  const num::Matrix qtot = mixers::evaluate_mixer(target.mixer, best, next.context);
  std::vector<double> y(next.batch);
  for (std::size_t b = 0; b < next.batch; ++b) {
    y[b] = reward_scale * next.rewards[b] + (next.done[b] ? 0.0 : gamma * qtot[b]);
  }
  return y;
}

/// Q_tot of the taken joint actions, B x 1, recorded on the tape.
inline Var joint_values(Tape& tape, const BatchView& view, Learner& online) {
  Var q_all = online.agent.forward(tape, tape.constant(view.inputs));
  Var chosen = num::reshape(num::pick(q_all, view.actions), view.batch, view.agents);
  return online.mixer.mix(tape, chosen, view.context);
}

/// Mean over the batch of (y - Q_tot)^2. Targets enter as constants.
inline Var bellman_loss(Tape& tape, std::span<const Transition* const> batch, Learner& online,
                        std::span<const double> targets) {
  const BatchView view = gather(batch, false);
  if (targets.size() != view.batch) {
    throw std::invalid_argument("bellman_loss: " + std::to_string(targets.size()) +
                                " targets for a batch of " + std::to_string(view.batch));
  }
  Var qtot = joint_values(tape, view, online);
  Var y = tape.constant(num::Matrix(view.batch, 1, std::vector<double>(targets.begin(), targets.end())));
  return num::mse(qtot, y);
}

struct EpisodeStats {
  double episode_return = 0.0;
  double mean_latency = 0.0;
  std::size_t slots = 0;
};

struct MetricRow {
  std::size_t episode = 0;
  double episode_return = 0.0;
  double smoothed_return = 0.0;
  double loss = std::numeric_limits<double>::quiet_NaN();
  double epsilon = 0.0;
  double mean_latency = 0.0;
  double wall_ms = 0.0;
};

template <MultiAgentWorld World>
class Trainer {
 public:
  /// Called after every checkpoint episode (see TrainConfig::checkpoint_every)
  /// and after the final episode.
  using CheckpointHook = std::function<void(Trainer&, std::size_t episode)>;

  Trainer(World world, TrainConfig cfg)
      : world_(std::move(world)),
        cfg_(std::move(cfg)),
        online_(make_learner(world_.num_agents(), world_.num_actions(), cfg_.agent, cfg_.mixer,
                             cfg_.seed)),
        target_(online_),
        buffer_(cfg_.buffer_capacity),
        explore_rng_(mix_seed(cfg_.seed, 201)),
        sample_rng_(mix_seed(cfg_.seed, 202)),
        stack_(cfg_.agent.stack_depth) {
    cfg_.validate();
  }

  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  World& world() { return world_; }
  const TrainConfig& config() const { return cfg_; }
  Learner& online() { return online_; }
  Learner& target() { return target_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  std::size_t train_steps() const { return steps_; }
  std::size_t agent_updates() const { return agent_updates_; }
  std::size_t episodes_collected() const { return episodes_; }

  /// Runs one episode with epsilon-greedy actions, storing every slot.
  EpisodeStats collect_episode(double epsilon) {
    world_.reset(mix_seed(cfg_.seed, episodes_));
    ++episodes_;
    num::Matrix obs = world_.observation_matrix();
    num::Matrix adj = world_.adjacency_matrix();
    stack_.reset(obs);
    num::Matrix inputs = stack_.inputs();
    EpisodeStats stats;
    double latency_sum = 0.0;
    while (!world_.done()) {
      const num::Matrix q = online_.agent.q_matrix(inputs);
      env::JointAction joint(q.rows());
      for (std::size_t i = 0; i < q.rows(); ++i) {
        joint[i] = agents::select_action(
            std::span<const double>(q.data() + i * q.cols(), q.cols()), epsilon, explore_rng_);
      }
      const env::StepResult res = world_.step(joint);
      num::Matrix next_obs = world_.observation_matrix();
      num::Matrix next_adj = world_.adjacency_matrix();
      stack_.push(next_obs);
      num::Matrix next_inputs = stack_.inputs();
      buffer_.push(Transition{inputs, next_inputs, obs, next_obs, adj, next_adj, joint, res.reward,
                              res.done});
      stats.episode_return += res.reward;
      latency_sum += res.outcome.mean_latency();
      ++stats.slots;
      obs = std::move(next_obs);
      adj = std::move(next_adj);
      inputs = std::move(next_inputs);
    }
    stats.mean_latency = stats.slots ? latency_sum / static_cast<double>(stats.slots) : 0.0;
    return stats;
  }

  /// One gradient step on a uniformly sampled batch. Returns nullopt without
  /// touching any parameter while the buffer holds fewer than batch_size.
  std::optional<double> train_step() {
    if (buffer_.size() < cfg_.batch_size) return std::nullopt;
    const std::vector<const Transition*> batch = buffer_.sample(cfg_.batch_size, sample_rng_);
    const std::vector<double> y = td_targets(batch, target_, cfg_.gamma, cfg_.reward_scale);
    std::vector<Param*> params = online_.params();
    num::zero_grads(params);
    double loss_value = 0.0;
    {
      Tape tape;
      Var loss = bellman_loss(tape, batch, online_, y);
      loss_value = loss.scalar();
      tape.backward(loss);
    }
    num::rmsprop_step(params, {cfg_.learning_rate, cfg_.rms_decay, cfg_.rms_epsilon});
    ++steps_;
    ++agent_updates_;
    if (steps_ % cfg_.target_sync_interval == 0) sync_target();
    return loss_value;
  }

  void sync_target() {
    const std::vector<Param*> src = online_.params();
    const std::vector<Param*> dst = target_.params();
    num::copy_values(src, dst);
  }

  /// Full training run; returns one metric row per episode.
  std::vector<MetricRow> train(const CheckpointHook& hook = {}) {
    std::vector<MetricRow> rows;
    rows.reserve(cfg_.episodes);
    std::deque<double> window;
    double window_sum = 0.0;
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t e = 0; e < cfg_.episodes; ++e) {
      MetricRow row;
      row.episode = e;
      row.epsilon = cfg_.epsilon.at(e, cfg_.episodes);
      const EpisodeStats stats = collect_episode(row.epsilon);
      row.episode_return = stats.episode_return;
      row.mean_latency = stats.mean_latency;
      for (std::size_t k = 0; k < cfg_.updates_per_episode; ++k) {
        if (auto l = train_step()) row.loss = *l;
      }
      window.push_back(stats.episode_return);
      window_sum += stats.episode_return;
      if (window.size() > cfg_.smoothing_window) {
        window_sum -= window.front();
        window.pop_front();
      }
      row.smoothed_return = window_sum / static_cast<double>(window.size());
      if (cfg_.record_wall_time) {
        row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                                start)
                          .count();
      }
      rows.push_back(row);
      const bool last = e + 1 == cfg_.episodes;
      const bool periodic = cfg_.checkpoint_every > 0 && (e + 1) % cfg_.checkpoint_every == 0;
      if (hook && (last || periodic)) hook(*this, e + 1);
    }
    return rows;
  }

  std::map<std::string, std::string> checkpoint_header(std::size_t episode) const {
    return {{"mixer", mixers::to_string(cfg_.mixer.kind)},
            {"num_agents", std::to_string(world_.num_agents())},
            {"num_actions", std::to_string(world_.num_actions())},
            {"stack_depth", std::to_string(cfg_.agent.stack_depth)},
            {"episode", std::to_string(episode)},
            {"seed", std::to_string(cfg_.seed)}};
  }

  void save_checkpoint(const std::filesystem::path& path, std::size_t episode) {
    std::vector<Param*> params = online_.params();
    std::vector<const Param*> cparams(params.begin(), params.end());
    num::save_checkpoint(path, checkpoint_header(episode), cparams);
  }

 private:
  World world_;
  TrainConfig cfg_;
  Learner online_;
  Learner target_;
  ReplayBuffer buffer_;
  Rng explore_rng_;
  Rng sample_rng_;
  agents::ObservationStack stack_;
  std::size_t steps_ = 0;
  std::size_t agent_updates_ = 0;
  std::size_t episodes_ = 0;
};

/// Greedy decentralized policy: every agent acts on its own observation
/// history through the shared agent network. Works for any vehicle count.
inline oracle::Policy learned_policy(agents::AgentNet agent, std::size_t stack_depth = 1) {
  struct State {
    agents::AgentNet agent;
    agents::ObservationStack stack;
    std::size_t last_slot = 0;
    bool started = false;
  };
  auto st = std::make_shared<State>(State{std::move(agent), agents::ObservationStack(stack_depth)});
  return [st](const env::Environment& w) {
    const num::Matrix obs = w.observation_matrix();
    if (!st->started || w.slot() == 0 || w.slot() != st->last_slot + 1) {
      st->stack.reset(obs);
    } else {
      st->stack.push(obs);
    }
    st->started = true;
    st->last_slot = w.slot();
    const num::Matrix q = st->agent.q_matrix(st->stack.inputs());
    env::JointAction joint(q.rows());
    for (std::size_t i = 0; i < q.rows(); ++i) {
      joint[i] = agents::greedy_action(std::span<const double>(q.data() + i * q.cols(), q.cols()));
    }
    return joint;
  };
}

}  // namespace kmarl::trainer
