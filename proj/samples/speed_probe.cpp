#include <chrono>
#include <cstdio>
#include <cstdlib>

#include "kmarl/trainer/trainer.hpp"

using namespace kmarl;

int main(int argc, char** argv) {
  const std::string kind = argc > 1 ? argv[1] : "kmarl";
  const std::size_t episodes = argc > 2 ? std::strtoul(argv[2], nullptr, 10) : 500;
  const std::uint64_t seed = argc > 3 ? std::strtoull(argv[3], nullptr, 10) : 1;
  const std::size_t agents_n = argc > 4 ? std::strtoul(argv[4], nullptr, 10) : 8;
  env::EnvConfig ec = env::make_config(agents_n, 2);
  ec.horizon = 50;
  trainer::TrainConfig tc;
  tc.episodes = episodes;
  tc.seed = seed;
  tc.mixer.kind = mixers::parse_mixer_kind(kind);
  trainer::Trainer<env::Environment> t(env::Environment(ec), tc);
  const auto start = std::chrono::steady_clock::now();
  const auto rows = t.train();
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  for (std::size_t i = 0; i < rows.size(); i += rows.size() / 10) {
    std::printf("ep %5zu ret %.5f smooth %.5f loss %.4f eps %.3f lat %.3e\n", rows[i].episode,
                rows[i].episode_return, rows[i].smoothed_return, rows[i].loss, rows[i].epsilon,
                rows[i].mean_latency);
  }
  const auto& last = rows.back();
  std::printf("final smooth %.6f lat %.4e  time %.1fs\n", last.smoothed_return, last.mean_latency, secs);
  auto eval = oracle::evaluate_policy(trainer::learned_policy(t.online().agent), 20, ec, 999);
  auto local = oracle::evaluate_policy(oracle::always_local_policy(), 20, ec, 999);
  auto greedy = oracle::evaluate_policy(oracle::greedy_policy(), 20, ec, 999);
  std::printf("eval learned lat %.4e  local %.4e greedy %.4e\n", eval.mean_latency, local.mean_latency, greedy.mean_latency);
}
