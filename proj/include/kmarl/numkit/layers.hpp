#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "kmarl/numkit/ops.hpp"
#include "kmarl/numkit/random.hpp"

namespace kmarl::num {

/// Fully connected layer y = act(x W + b). W is in x out.
struct Dense {
  Param weight;
  Param bias;
  Activation act = Activation::identity;

  Dense() = default;
  Dense(const std::string& name, std::size_t in, std::size_t out, Activation a, Rng& rng)
      : weight(name + ".w", Matrix(in, out)), bias(name + ".b", Matrix(1, out)), act(a) {
    // Glorot-uniform weights, zero bias.
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    for (double& v : weight.value.values()) v = uniform(rng, -limit, limit);
  }

  std::size_t in_dim() const { return weight.value.rows(); }
  std::size_t out_dim() const { return weight.value.cols(); }

  Var forward(Tape& tape, Var x) {
    Var y = add_row(matmul(x, tape.param(weight)), tape.param(bias));
    return act == Activation::identity ? y : activation(y, act);
  }

  void collect(std::vector<Param*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

/// Stack of Dense layers; hidden layers use `hidden_act`, the last layer is linear.
struct Mlp {
  std::vector<Dense> layers;

  Mlp() = default;
  Mlp(const std::string& name, std::size_t in, const std::vector<std::size_t>& hidden,
      std::size_t out, Activation hidden_act, Rng& rng) {
    std::size_t prev = in;
    for (std::size_t i = 0; i < hidden.size(); ++i) {
      layers.emplace_back(name + "." + std::to_string(i), prev, hidden[i], hidden_act, rng);
      prev = hidden[i];
    }
    layers.emplace_back(name + "." + std::to_string(hidden.size()), prev, out,
                        Activation::identity, rng);
  }

  Var forward(Tape& tape, Var x) {
    for (Dense& l : layers) x = l.forward(tape, x);
    return x;
  }

  void collect(std::vector<Param*>& out) {
    for (Dense& l : layers) l.collect(out);
  }
};

}  // namespace kmarl::num
