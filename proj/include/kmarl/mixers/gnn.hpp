#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "kmarl/numkit/layers.hpp"

namespace kmarl::mixers {

using num::Activation;
using num::Matrix;
using num::Param;
using num::Reduce;
using num::Tape;
using num::Var;

/// Weights of one graph-convolution layer.
struct GnnLayerParams {
  Param w_self;
  Param w_other;

  GnnLayerParams() = default;
  GnnLayerParams(const std::string& name, std::size_t in, std::size_t out, Rng& rng)
      : w_self(name + ".w_self", Matrix(in, out)), w_other(name + ".w_other", Matrix(in, out)) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    for (double& v : w_self.value.values()) v = uniform(rng, -limit, limit);
    for (double& v : w_other.value.values()) v = uniform(rng, -limit, limit);
  }
};

/// h' = act((1/N) A h W_other + h W_self), applied to G graphs of N nodes at
/// once. `h` is (G*N) x d with graph g in rows g*N..g*N+N-1; `adjacency`
/// stacks the G N x N matrices the same way.
inline Var gnn_layer(Tape& tape, Var h, Var adjacency, GnnLayerParams& layer, Activation act) {
  const std::size_t n = adjacency.cols();
  if (n == 0 || adjacency.rows() != h.rows()) {
    throw num::ShapeError("gnn_layer: adjacency " + adjacency.value().shape() +
                          " does not match node features " + h.value().shape());
  }
  if (layer.w_self.value.rows() != h.cols()) {
    throw num::ShapeError("gnn_layer: weights expect " + std::to_string(layer.w_self.value.rows()) +
                          " features, got " + std::to_string(h.cols()));
  }
  Var neighbours = num::scale(num::block_matmul(adjacency, h), 1.0 / static_cast<double>(n));
  Var pre = num::add(num::matmul(neighbours, tape.param(layer.w_other)),
                     num::matmul(h, tape.param(layer.w_self)));
  return act == Activation::identity ? pre : num::activation(pre, act);
}

struct GnnConfig {
  std::size_t layers = 2;
  std::size_t width = 32;
  Activation activation = Activation::relu;
  Reduce pooling = Reduce::mean_rows;
};

/// Stack of graph-convolution layers followed by per-graph pooling.
class GnnEncoder {
 public:
  GnnEncoder() = default;
  GnnEncoder(const std::string& name, std::size_t node_dim, const GnnConfig& cfg, Rng& rng)
      : cfg_(cfg) {
    std::size_t prev = node_dim;
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      layers_.emplace_back(name + ".gnn" + std::to_string(l), prev, cfg.width, rng);
      prev = cfg.width;
    }
  }

  std::size_t embedding_dim(std::size_t node_dim) const {
    return layers_.empty() ? node_dim : cfg_.width;
  }

  /// Node representations after the last layer, (G*N) x width.
  Var nodes(Tape& tape, Var features, Var adjacency) {
    Var h = features;
    for (GnnLayerParams& l : layers_) h = gnn_layer(tape, h, adjacency, l, cfg_.activation);
    return h;
  }

  /// Pooled graph embeddings, G x width. Independent of N.
  Var embed(Tape& tape, Var features, Var adjacency) {
    return num::segment_reduce(nodes(tape, features, adjacency), adjacency.cols(), cfg_.pooling);
  }

  std::vector<GnnLayerParams>& layers() { return layers_; }

  void collect(std::vector<Param*>& out) {
    for (GnnLayerParams& l : layers_) {
      out.push_back(&l.w_self);
      out.push_back(&l.w_other);
    }
  }

 private:
  GnnConfig cfg_;
  std::vector<GnnLayerParams> layers_;
};

}  // namespace kmarl::mixers
