#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "kmarl/env/latency.hpp"
#include "kmarl/numkit/matrix.hpp"
#include "kmarl/numkit/random.hpp"

namespace kmarl::trainer {

using num::Matrix;

/// One slot of experience for all agents.
struct Transition {
  Matrix inputs;       // I x (4*depth) agent-net inputs
  Matrix next_inputs;
  Matrix observations;  // I x 4
  Matrix next_observations;
  Matrix adjacency;  // I x I
  Matrix next_adjacency;
  env::JointAction actions;
  double reward = 0.0;
  bool done = false;
};

/// Fixed-capacity ring buffer with FIFO eviction and uniform sampling with
/// replacement.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 2000) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be positive");
    items_.reserve(capacity);
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }

  void push(Transition t) {
    if (items_.size() < capacity_) {
      items_.push_back(std::move(t));
    } else {
      items_[head_] = std::move(t);
      head_ = (head_ + 1) % capacity_;
    }
  }

  /// i-th oldest stored transition.
  const Transition& at(std::size_t i) const {
    if (i >= items_.size()) throw std::out_of_range("ReplayBuffer::at");
    return items_[(head_ + i) % items_.size()];
  }

  /// Storage slot index of each draw, for sampling diagnostics.
  std::vector<std::size_t> sample_indices(std::size_t count, Rng& rng) const {
    if (items_.empty()) throw std::logic_error("ReplayBuffer: sampling from an empty buffer");
    std::vector<std::size_t> idx(count);
    for (std::size_t& i : idx) i = uniform_index(rng, items_.size());
    return idx;
  }

  std::vector<const Transition*> sample(std::size_t count, Rng& rng) const {
    std::vector<const Transition*> out;
    out.reserve(count);
    for (std::size_t i : sample_indices(count, rng)) out.push_back(&items_[i]);
    return out;
  }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;  // oldest element once full
  std::vector<Transition> items_;
};

}  // namespace kmarl::trainer
