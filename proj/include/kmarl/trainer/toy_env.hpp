#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "kmarl/env/environment.hpp"

namespace kmarl::trainer {

/// One agent, one slot per episode, a fixed reward per action and a constant
/// observation. The Bellman fixed point is Q(a) = reward[a].
class ToyBandit {
 public:
  explicit ToyBandit(std::vector<double> rewards = {-1.0, -0.2}) : rewards_(std::move(rewards)) {
    if (rewards_.empty()) throw std::invalid_argument("ToyBandit: needs at least one action");
  }

  std::size_t num_agents() const { return 1; }
  std::size_t num_actions() const { return rewards_.size(); }
  bool done() const { return done_; }
  const std::vector<double>& rewards() const { return rewards_; }

  void reset(std::uint64_t) { done_ = false; }

  num::Matrix observation_matrix() const { return num::Matrix(1, env::kObservationDim, 0.5); }
  num::Matrix adjacency_matrix() const { return num::Matrix(1, 1); }

  env::StepResult step(const env::JointAction& joint) {
    if (done_) throw std::logic_error("ToyBandit: episode already finished");
    if (joint.size() != 1 || joint[0] >= rewards_.size()) {
      throw std::invalid_argument("ToyBandit: bad joint action");
    }
    done_ = true;
    env::StepResult r;
    r.reward = rewards_[joint[0]];
    r.outcome.choice = joint;
    r.outcome.team_reward = r.reward;
    r.done = true;
    return r;
  }

 private:
  std::vector<double> rewards_;
  bool done_ = true;
};

}  // namespace kmarl::trainer
