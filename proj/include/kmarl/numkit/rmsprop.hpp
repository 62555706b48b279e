#pragma once

#include <cmath>
#include <span>

#include "kmarl/numkit/tape.hpp"

namespace kmarl::num {

struct RmsPropConfig {
  double learning_rate = 1e-4;
  double decay = 0.99;
  double epsilon = 1e-8;
};

/// s <- decay*s + (1-decay)*g^2;  v <- v - lr*g/(sqrt(s)+eps);  then g <- 0.
inline void rmsprop_step(std::span<Param* const> params, const RmsPropConfig& cfg) {
  for (Param* p : params) {
    double* v = p->value.data();
    double* g = p->grad.data();
    double* s = p->rms_state.data();
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      s[i] = cfg.decay * s[i] + (1.0 - cfg.decay) * g[i] * g[i];
      v[i] -= cfg.learning_rate * g[i] / (std::sqrt(s[i]) + cfg.epsilon);
      g[i] = 0.0;
    }
  }
}

inline void zero_grads(std::span<Param* const> params) {
  for (Param* p : params) p->zero_grad();
}

/// Copies values (not optimizer state) from `src` into `dst`, pairwise.
inline void copy_values(std::span<Param* const> src, std::span<Param* const> dst) {
  for (std::size_t i = 0; i < src.size() && i < dst.size(); ++i) dst[i]->value = src[i]->value;
}

}  // namespace kmarl::num
