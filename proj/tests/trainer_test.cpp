#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "kmarl/numkit/grad_check.hpp"
#include "kmarl/trainer/toy_env.hpp"
#include "kmarl/trainer/trainer.hpp"

using namespace kmarl;
using namespace kmarl::trainer;
using num::Matrix;

namespace {

Transition make_transition(std::size_t agents, double reward, bool done, double fill = 0.5) {
  Transition t;
  t.inputs = Matrix(agents, 4, fill);
  t.next_inputs = Matrix(agents, 4, fill);
  t.observations = t.inputs;
  t.next_observations = t.next_inputs;
  t.adjacency = Matrix(agents, agents);
  t.next_adjacency = Matrix(agents, agents);
  t.actions.assign(agents, 0);
  t.reward = reward;
  t.done = done;
  return t;
}

void zero_all(Learner& l) {
  for (num::Param* p : l.params()) p->value.fill(0.0);
}

// Agent net computing q = x0 * (1, 2, -1, 0) for inputs with x0 >= 0: two
// relu layers pass feature 0 through unchanged, the output layer scales it.
void hand_set(Learner& l) {
  zero_all(l);
  auto params = l.agent.params();  // agent.0.w, agent.0.b, agent.1.w, agent.1.b, agent.2.w, agent.2.b
  params[0]->value(0, 0) = 1.0;
  params[2]->value(0, 0) = 1.0;
  params[4]->value(0, 0) = 1.0;
  params[4]->value(0, 1) = 2.0;
  params[4]->value(0, 2) = -1.0;
}

TrainConfig toy_config() {
  TrainConfig cfg;
  cfg.mixer.kind = MixerKind::vdn;
  cfg.reward_scale = 1.0;
  cfg.episodes = 2063;  // 63 warm-up episodes, then 2000 train steps
  cfg.epsilon = {1.0, 1.0, 1.0};
  cfg.seed = 3;
  return cfg;
}

}  // namespace

TEST(ReplayBuffer, FifoEviction) {
  ReplayBuffer buf(5);
  for (int i = 1; i <= 12; ++i) buf.push(make_transition(1, i, false));
  ASSERT_EQ(buf.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(buf.at(i).reward, 8.0 + static_cast<double>(i));
  EXPECT_THROW(buf.at(5), std::out_of_range);
  EXPECT_THROW(ReplayBuffer(0), std::invalid_argument);
}

TEST(ReplayBuffer, SamplingIsUniform) {
  ReplayBuffer buf(20);
  for (int i = 0; i < 20; ++i) buf.push(make_transition(1, i, false));
  Rng rng(51);
  const std::size_t draws = 100000;
  std::vector<int> counts(20, 0);
  for (std::size_t idx : buf.sample_indices(draws, rng)) ++counts[idx];
  const double expected = draws / 20.0;
  const double sigma = std::sqrt(draws * (1.0 / 20.0) * (19.0 / 20.0));
  for (int c : counts) EXPECT_LE(std::abs(c - expected), 3.0 * sigma);
  ReplayBuffer empty(3);
  EXPECT_THROW(empty.sample(1, rng), std::logic_error);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.gamma = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.batch_size = 3000;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(TdTargets, TerminalAndMyopic) {
  Learner l = make_learner(2, 4, {}, {mixers::MixerKind::vdn}, 1);
  const Transition a = make_transition(2, -3.0, true), b = make_transition(2, 2.5, false);
  const Transition* batch[] = {&a, &b};
  const auto y = td_targets(batch, l, 0.9);
  EXPECT_EQ(y[0], -3.0);
  const auto myopic = td_targets(batch, l, 0.0);
  EXPECT_EQ(myopic[0], -3.0);
  EXPECT_EQ(myopic[1], 2.5);
  EXPECT_EQ(td_targets(batch, l, 0.0, 10.0)[1], 25.0);
}

TEST(TdTargets, VdnHandArithmetic) {
  Learner l = make_learner(2, 4, {}, {mixers::MixerKind::vdn}, 1);
  hand_set(l);
  Transition t = make_transition(2, 0.7, false);
  t.next_inputs(0, 0) = 0.5;   // q' = (0.5, 1.0, -0.5, 0): max 1.0
  t.next_inputs(1, 0) = 0.25;  // q' = (0.25, 0.5, -0.25, 0): max 0.5
  const Transition* batch[] = {&t};
  EXPECT_NEAR(td_targets(batch, l, 0.9)[0], 0.7 + 0.9 * (1.0 + 0.5), 1e-15);
}

TEST(BellmanLoss, Arithmetic) {
  Learner l = make_learner(1, 2, {}, {mixers::MixerKind::vdn}, 1);
  zero_all(l);
  const Transition t = make_transition(1, 0.0, true);
  const Transition* batch[] = {&t};
  {
    num::Tape tape;
    const double y[] = {1.0};
    EXPECT_EQ(bellman_loss(tape, batch, l, y).scalar(), 1.0);
  }
  hand_set(l);
  {
    num::Tape tape;
    const double y[] = {0.5};  // q(action 0) = x0 = 0.5
    EXPECT_EQ(bellman_loss(tape, batch, l, y).scalar(), 0.0);
  }
  num::Tape tape;
  const double wrong[] = {1.0, 2.0};
  EXPECT_THROW(bellman_loss(tape, batch, l, wrong), std::invalid_argument);
}

TEST(BellmanLoss, GradientMatchesFiniteDifferences) {
  for (MixerKind kind : {MixerKind::vdn, MixerKind::qmix, MixerKind::kmarl}) {
    agents::AgentConfig small;
    small.hidden = {8};
    mixers::MixerConfig mc;
    mc.kind = kind;
    mc.hidden = 6;
    mc.gnn.width = 5;
    Learner l = make_learner(3, 4, small, mc, 7);
    Rng rng(52);
    std::vector<Transition> ts;
    for (int b = 0; b < 4; ++b) {
      Transition t = make_transition(3, uniform(rng, -1, 1), b == 3);
      for (double& v : t.inputs.values()) v = uniform01(rng);
      t.observations = t.inputs;
      t.adjacency(0, 1) = t.adjacency(1, 0) = 1.0;
      for (auto& a : t.actions) a = uniform_index(rng, 4);
      ts.push_back(t);
    }
    std::vector<const Transition*> batch;
    for (const auto& t : ts) batch.push_back(&t);
    const std::vector<double> y{0.3, -0.4, 1.1, -2.0};
    const auto report = num::grad_check(
        [&](num::Tape& tape) { return bellman_loss(tape, batch, l, y); }, l.params(), 1e-4);
    EXPECT_TRUE(report.passed) << mixers::to_string(kind) << " " << report.max_relative_error;
  }
}

TEST(BellmanLoss, NoGradientThroughTargets) {
  Learner online = make_learner(2, 4, {}, {mixers::MixerKind::qmix}, 8);
  Learner target = make_learner(2, 4, {}, {mixers::MixerKind::qmix}, 9);
  Transition t = make_transition(2, 0.4, false, 0.3);
  const Transition* batch[] = {&t};

  auto grads = [&](std::span<const double> y) {
    num::zero_grads(online.params());
    num::zero_grads(target.params());
    num::Tape tape;
    tape.backward(bellman_loss(tape, batch, online, y));
    std::vector<Matrix> g;
    for (num::Param* p : online.params()) g.push_back(p->grad);
    return g;
  };

  const std::vector<double> cached = td_targets(batch, target, 0.9);
  const auto before = grads(cached);
  for (num::Param* p : target.params()) EXPECT_EQ(p->grad, Matrix(p->value.rows(), p->value.cols()));

  for (num::Param* p : target.params())
    for (double& v : p->value.values()) v += 0.25;
  const std::vector<double> recomputed = td_targets(batch, target, 0.9);
  ASSERT_NE(recomputed[0], cached[0]);
  // Same cached targets after perturbing the target network: same gradient.
  EXPECT_EQ(grads(cached), before);
}

TEST(Trainer, GreedyZeroNetsPickLocal) {
  env::EnvConfig ec = env::make_config(3, 2);
  ec.horizon = 10;
  TrainConfig cfg;
  Trainer<env::Environment> tr(env::Environment(ec), cfg);
  zero_all(tr.online());
  tr.collect_episode(0.0);
  for (std::size_t i = 0; i < tr.buffer().size(); ++i)
    EXPECT_EQ(tr.buffer().at(i).actions, env::JointAction(3, 0));
}

TEST(Trainer, EpisodeBookkeeping) {
  env::EnvConfig ec = env::make_config(4, 2);
  ec.horizon = 30;
  TrainConfig cfg;
  Trainer<env::Environment> tr(env::Environment(ec), cfg);
  const EpisodeStats s = tr.collect_episode(0.5);
  EXPECT_EQ(tr.buffer().size(), std::min<std::size_t>(30, 2000));
  double sum = 0.0;
  for (std::size_t i = 0; i < tr.buffer().size(); ++i) sum += tr.buffer().at(i).reward;
  EXPECT_NEAR(s.episode_return, sum, 1e-15);
  EXPECT_TRUE(tr.buffer().at(29).done);
  EXPECT_FALSE(tr.buffer().at(28).done);
  EXPECT_EQ(tr.buffer().at(1).observations, tr.buffer().at(0).next_observations);
}

TEST(Trainer, UnderfullBufferLeavesParametersAlone) {
  env::EnvConfig ec = env::make_config(2, 1);
  ec.horizon = 10;
  TrainConfig cfg;
  Trainer<env::Environment> tr(env::Environment(ec), cfg);
  std::vector<Matrix> before;
  for (num::Param* p : tr.online().params()) before.push_back(p->value);
  tr.collect_episode(1.0);
  EXPECT_FALSE(tr.train_step().has_value());
  std::size_t k = 0;
  for (num::Param* p : tr.online().params()) EXPECT_EQ(p->value, before[k++]);
  EXPECT_EQ(tr.train_steps(), 0u);
}

TEST(Trainer, SyncMakesTargetIdentical) {
  env::EnvConfig ec = env::make_config(2, 1);
  ec.horizon = 40;
  TrainConfig cfg;
  cfg.mixer.kind = MixerKind::kmarl;
  cfg.target_sync_interval = 3;
  Trainer<env::Environment> tr(env::Environment(ec), cfg);
  tr.collect_episode(1.0);
  tr.collect_episode(1.0);
  auto same = [&] {
    auto a = tr.online().params(), b = tr.target().params();
    for (std::size_t i = 0; i < a.size(); ++i)
      if (a[i]->value != b[i]->value) return false;
    return true;
  };
  EXPECT_TRUE(same());
  ASSERT_TRUE(tr.train_step().has_value());
  EXPECT_FALSE(same());
  tr.train_step();
  tr.train_step();
  EXPECT_TRUE(same());
}

TEST(Trainer, ToyBanditConvergesToBellmanFixedPoint) {
  Trainer<ToyBandit> tr(ToyBandit({-1.0, -0.2}), toy_config());
  tr.train();
  EXPECT_EQ(tr.train_steps(), 2000u);
  const auto q = tr.online().agent.q_values(std::vector<double>(4, 0.5));
  EXPECT_NEAR(q[0], -1.0, 1e-2);
  EXPECT_NEAR(q[1], -0.2, 1e-2);
}

TEST(Trainer, ToySmoothedReturnMostlyNonDecreasing) {
  TrainConfig cfg = toy_config();
  cfg.episodes = 2000;
  cfg.epsilon = {1.0, 0.0, 0.2};
  Trainer<ToyBandit> tr(ToyBandit({-1.0, -0.2}), cfg);
  const auto rows = tr.train();
  std::size_t ok = 0;
  for (std::size_t e = 1; e < rows.size(); ++e)
    ok += rows[e].smoothed_return >= rows[e - 1].smoothed_return ? 1 : 0;
  EXPECT_GE(static_cast<double>(ok) / static_cast<double>(rows.size() - 1), 0.8);
  EXPECT_NEAR(rows.back().smoothed_return, -0.2, 1e-12);
}

TEST(Trainer, MixersShareAgentInitializationAndUpdateCounts) {
  env::EnvConfig ec = env::make_config(3, 2);
  ec.horizon = 20;
  TrainConfig cfg;
  cfg.episodes = 6;
  cfg.batch_size = 16;
  cfg.mixer.kind = MixerKind::vdn;
  Trainer<env::Environment> vdn(env::Environment(ec), cfg);
  cfg.mixer.kind = MixerKind::qmix;
  Trainer<env::Environment> qmix(env::Environment(ec), cfg);
  auto a = vdn.online().agent.params(), b = qmix.online().agent.params();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i]->value, b[i]->value);
  vdn.train();
  qmix.train();
  EXPECT_EQ(vdn.agent_updates(), qmix.agent_updates());
  EXPECT_EQ(vdn.agent_updates(), 6u);
}

TEST(Trainer, SameSeedSameMetrics) {
  env::EnvConfig ec = env::make_config(3, 2);
  ec.horizon = 15;
  TrainConfig cfg;
  cfg.episodes = 12;
  cfg.batch_size = 16;
  auto run = [&] {
    Trainer<env::Environment> tr(env::Environment(ec), cfg);
    return tr.train();
  };
  const auto a = run(), b = run();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].episode_return, b[i].episode_return);
    EXPECT_EQ(a[i].smoothed_return, b[i].smoothed_return);
    EXPECT_EQ(std::isnan(a[i].loss), std::isnan(b[i].loss));
    if (!std::isnan(a[i].loss)) EXPECT_EQ(a[i].loss, b[i].loss);
    EXPECT_EQ(a[i].wall_ms, 0.0);
  }
}

TEST(Trainer, CheckpointHookAndReload) {
  env::EnvConfig ec = env::make_config(3, 2);
  ec.horizon = 10;
  TrainConfig cfg;
  cfg.episodes = 7;
  cfg.checkpoint_every = 3;
  cfg.batch_size = 8;
  Trainer<env::Environment> tr(env::Environment(ec), cfg);
  std::vector<std::size_t> seen;
  const auto dir = std::filesystem::temp_directory_path() / "kmarl_trainer_test";
  std::filesystem::create_directories(dir);
  tr.train([&](Trainer<env::Environment>& t, std::size_t ep) {
    seen.push_back(ep);
    t.save_checkpoint(dir / "ck.bin", ep);
  });
  EXPECT_EQ(seen, (std::vector<std::size_t>{3, 6, 7}));
  const num::Checkpoint ck = num::load_checkpoint(dir / "ck.bin");
  EXPECT_EQ(ck.header.at("episode"), "7");
  EXPECT_EQ(ck.header.at("mixer"), "kmarl");
  Learner fresh = make_learner(3, 4, cfg.agent, cfg.mixer, 99);
  auto params = fresh.params();
  num::restore(ck, params);
  auto trained = tr.online().params();
  for (std::size_t i = 0; i < params.size(); ++i) EXPECT_EQ(params[i]->value, trained[i]->value);
  std::filesystem::remove_all(dir);
}
