#pragma once

#include <cstddef>
#include <deque>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "kmarl/env/environment.hpp"
#include "kmarl/numkit/layers.hpp"
#include "kmarl/numkit/random.hpp"

namespace kmarl::agents {

using num::Matrix;
using num::Param;
using num::Tape;
using num::Var;

struct AgentConfig {
  std::vector<std::size_t> hidden{64, 64};
  num::Activation activation = num::Activation::relu;
  /// Number of most recent observations concatenated into the agent input.
  std::size_t stack_depth = 1;
};

/// Local utility network shared by every agent: observation -> Q per action.
class AgentNet {
 public:
  AgentNet() = default;
  AgentNet(std::size_t num_actions, const AgentConfig& cfg, Rng& rng)
      : input_dim_(env::kObservationDim * cfg.stack_depth),
        num_actions_(num_actions),
        mlp_("agent", input_dim_, cfg.hidden, num_actions, cfg.activation, rng) {
    if (num_actions == 0) throw std::invalid_argument("AgentNet: num_actions must be positive");
    if (cfg.stack_depth == 0) throw std::invalid_argument("AgentNet: stack_depth must be positive");
  }

  std::size_t input_dim() const { return input_dim_; }
  std::size_t num_actions() const { return num_actions_; }

  /// inputs: N x input_dim, one row per agent (any N). Returns N x num_actions.
  Var forward(Tape& tape, Var inputs) {
    if (inputs.cols() != input_dim_) {
      throw num::ShapeError("AgentNet: input has " + std::to_string(inputs.cols()) +
                            " features, expected " + std::to_string(input_dim_));
    }
    return mlp_.forward(tape, inputs);
  }

  /// Gradient-free batch evaluation.
  Matrix q_matrix(const Matrix& inputs) {
    Tape tape;
    tape.set_grad_enabled(false);
    return forward(tape, tape.constant(inputs)).value();
  }

  std::vector<double> q_values(std::span<const double> input) {
    Matrix m(1, input.size(), std::vector<double>(input.begin(), input.end()));
    return q_matrix(m).values();
  }

  std::vector<Param*> params() {
    std::vector<Param*> out;
    mlp_.collect(out);
    return out;
  }

 private:
  std::size_t input_dim_ = env::kObservationDim;
  std::size_t num_actions_ = 0;
  num::Mlp mlp_;
};

/// Argmax with the lowest index winning ties.
inline std::size_t greedy_action(std::span<const double> q) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < q.size(); ++i) {
    if (q[i] > q[best]) best = i;
  }
  return best;
}

/// Epsilon-greedy: uniform with probability epsilon, greedy otherwise.
inline std::size_t select_action(std::span<const double> q, double epsilon, Rng& rng) {
  if (epsilon < 0.0 || epsilon > 1.0) throw std::invalid_argument("select_action: epsilon outside [0,1]");
  if (q.empty()) throw std::invalid_argument("select_action: no actions");
  if (epsilon > 0.0 && uniform01(rng) < epsilon) return uniform_index(rng, q.size());
  return greedy_action(q);
}

/// Linear decay from `start` to `end` over the first `fraction` of episodes.
struct EpsilonSchedule {
  double start = 1.0;
  double end = 0.05;
  double fraction = 0.5;

  double at(std::size_t episode, std::size_t total_episodes) const {
    const double horizon = fraction * static_cast<double>(total_episodes);
    if (horizon <= 0.0) return end;
    const double t = static_cast<double>(episode) / horizon;
    return t >= 1.0 ? end : start + (end - start) * t;
  }
};

/// Per-agent history of observations; produces I x (4*depth) agent inputs,
/// newest observation first. The window starts filled with the reset observation.
class ObservationStack {
 public:
  explicit ObservationStack(std::size_t depth = 1) : depth_(depth) {}

  void reset(const Matrix& obs) {
    history_.assign(depth_, obs);
  }
  void push(const Matrix& obs) {
    history_.push_front(obs);
    if (history_.size() > depth_) history_.pop_back();
  }

  Matrix inputs() const {
    const Matrix& now = history_.front();
    const std::size_t n = now.rows(), d = now.cols();
    Matrix out(n, d * depth_);
    for (std::size_t k = 0; k < depth_; ++k)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) out(i, k * d + j) = history_[k](i, j);
    return out;
  }

 private:
  std::size_t depth_;
  std::deque<Matrix> history_;
};

}  // namespace kmarl::agents
