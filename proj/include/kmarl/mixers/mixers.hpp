#pragma once

#include <algorithm>
#include <limits>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "kmarl/env/environment.hpp"
#include "kmarl/mixers/gnn.hpp"
#include "kmarl/numkit/layers.hpp"

namespace kmarl::mixers {

enum class MixerKind { vdn, qmix, kmarl };

inline std::string to_string(MixerKind k) {
  switch (k) {
    case MixerKind::vdn: return "vdn";
    case MixerKind::qmix: return "qmix";
    case MixerKind::kmarl: return "kmarl";
  }
  return "?";
}

inline MixerKind parse_mixer_kind(const std::string& s) {
  if (s == "vdn") return MixerKind::vdn;
  if (s == "qmix") return MixerKind::qmix;
  if (s == "kmarl") return MixerKind::kmarl;
  throw std::invalid_argument("unknown mixer kind '" + s + "' (expected vdn, qmix or kmarl)");
}

/// Everything a mixer may condition on, for a batch of B joint states of
/// N agents each.
struct MixContext {
  std::size_t batch = 0;
  std::size_t agents = 0;
  Matrix node_features;  // (B*N) x 4, agent-major within each sample
  Matrix adjacency;      // (B*N) x N, stacked per-sample adjacency

  /// B x (N*4) concatenation of observations in agent-index order.
  Matrix states() const {
    return node_features.reshaped(batch, agents * node_features.cols());
  }

  static MixContext single(const Matrix& observations, const Matrix& adj) {
    return MixContext{1, observations.rows(), observations, adj};
  }
};

struct MixerConfig {
  MixerKind kind = MixerKind::kmarl;
  std::size_t hidden = 32;
  GnnConfig gnn{};
  /// Absolute value on generated mixing weights. Only the monotonicity
  /// mutation test turns this off.
  bool nonnegative_weights = true;
};

/// Q_tot = sum_i q_i.
class VdnMixer {
 public:
  Var mix(Tape& tape, Var q, const MixContext&) {
    return num::matmul(q, tape.constant(Matrix(q.cols(), 1, 1.0)));
  }
  void collect(std::vector<Param*>&) {}
};

namespace detail {

inline Var positive(Var x, bool enabled) {
  return enabled ? num::activation(x, Activation::abs) : x;
}

/// Hypernetwork heads shared by the QMIX and KMARL mixers: conditioning
/// vector -> nonnegative first/second layer weights and biases.
struct Hypernet {
  num::Dense w1;
  num::Dense b1;
  num::Dense w2;
  num::Mlp b2;

  Hypernet() = default;
  Hypernet(const std::string& name, std::size_t cond_dim, std::size_t w1_width,
           std::size_t hidden, Rng& rng)
      : w1(name + ".hyper_w1", cond_dim, w1_width, Activation::identity, rng),
        b1(name + ".hyper_b1", cond_dim, hidden, Activation::identity, rng),
        w2(name + ".hyper_w2", cond_dim, hidden, Activation::identity, rng),
        b2(name + ".hyper_b2", cond_dim, {hidden}, 1, Activation::relu, rng) {}

  void collect(std::vector<Param*>& out) {
    w1.collect(out);
    b1.collect(out);
    w2.collect(out);
    b2.collect(out);
  }
};

/// Two-layer monotone mixing given generated first-layer weights
/// (B x (N*H)) and the conditioning input.
inline Var monotone_mix(Tape& tape, Hypernet& hyper, Var q, Var first_weights, Var cond,
                        bool nonnegative) {
  Var hidden = num::activation(num::add(num::bilinear(q, first_weights), hyper.b1.forward(tape, cond)),
                               Activation::elu);
  Var w2 = positive(hyper.w2.forward(tape, cond), nonnegative);
  return num::add(num::bilinear(hidden, w2), hyper.b2.forward(tape, cond));
}

}  // namespace detail

/// QMIX: hypernetworks read the ordered global state and emit one weight
/// column per agent position.
class QmixMixer {
 public:
  QmixMixer() = default;
  QmixMixer(std::size_t num_agents, const MixerConfig& cfg, Rng& rng)
      : agents_(num_agents),
        state_dim_(num_agents * env::kObservationDim),
        nonnegative_(cfg.nonnegative_weights),
        hyper_("mixer", state_dim_, num_agents * cfg.hidden, cfg.hidden, rng) {}

  Var mix(Tape& tape, Var q, const MixContext& ctx) {
    if (q.cols() != agents_ || ctx.agents != agents_) {
      throw num::ShapeError("qmix: mixer built for " + std::to_string(agents_) + " agents, got " +
                            std::to_string(q.cols()));
    }
    Matrix states = ctx.states();
    if (states.cols() != state_dim_) {
      throw num::ShapeError("qmix: state dimension " + std::to_string(states.cols()) +
                            ", expected " + std::to_string(state_dim_));
    }
    Var s = tape.constant(std::move(states));
    Var w1 = detail::positive(hyper_.w1.forward(tape, s), nonnegative_);
    return detail::monotone_mix(tape, hyper_, q, w1, s, nonnegative_);
  }

  detail::Hypernet& hypernet() { return hyper_; }
  void collect(std::vector<Param*>& out) { hyper_.collect(out); }

 private:
  std::size_t agents_ = 0;
  std::size_t state_dim_ = 0;
  bool nonnegative_ = true;
  detail::Hypernet hyper_;
};

/// KMARL: a GNN over the vehicle graph produces a pooled embedding e; the
/// hypernetworks read e and emit a single per-agent weight row that is
/// replicated for every agent. The result is invariant to agent relabeling
/// and accepts any number of agents.
class KmarlMixer {
 public:
  KmarlMixer() = default;
  KmarlMixer(const MixerConfig& cfg, Rng& rng)
      : nonnegative_(cfg.nonnegative_weights),
        encoder_("mixer", env::kObservationDim, cfg.gnn, rng),
        hyper_("mixer", encoder_.embedding_dim(env::kObservationDim), cfg.hidden, cfg.hidden,
               rng) {}

  Var embed(Tape& tape, const MixContext& ctx) {
    return encoder_.embed(tape, tape.constant(ctx.node_features), tape.constant(ctx.adjacency));
  }

  Var mix(Tape& tape, Var q, const MixContext& ctx) {
    if (q.cols() != ctx.agents || q.rows() != ctx.batch) {
      throw num::ShapeError("kmarl: utilities " + q.value().shape() + " do not match context " +
                            Matrix::shape_string(ctx.batch, ctx.agents));
    }
    Var e = embed(tape, ctx);
    Var w1 = num::tile_cols(detail::positive(hyper_.w1.forward(tape, e), nonnegative_), ctx.agents);
    return detail::monotone_mix(tape, hyper_, q, w1, e, nonnegative_);
  }

  GnnEncoder& encoder() { return encoder_; }
  detail::Hypernet& hypernet() { return hyper_; }

  void collect(std::vector<Param*>& out) {
    encoder_.collect(out);
    hyper_.collect(out);
  }

 private:
  bool nonnegative_ = true;
  GnnEncoder encoder_;
  detail::Hypernet hyper_;
};

/// Type-erased mixer used by the trainer.
class Mixer {
 public:
  Mixer() = default;
  Mixer(std::size_t num_agents, const MixerConfig& cfg, Rng& rng) : kind_(cfg.kind) {
    switch (cfg.kind) {
      case MixerKind::vdn: impl_ = VdnMixer{}; break;
      case MixerKind::qmix: impl_ = QmixMixer(num_agents, cfg, rng); break;
      case MixerKind::kmarl: impl_ = KmarlMixer(cfg, rng); break;
    }
  }

  MixerKind kind() const { return kind_; }

  /// q: B x N chosen utilities. Returns B x 1 joint values.
  Var mix(Tape& tape, Var q, const MixContext& ctx) {
    return std::visit([&](auto& m) { return m.mix(tape, q, ctx); }, impl_);
  }

  std::vector<Param*> params() {
    std::vector<Param*> out;
    std::visit([&](auto& m) { m.collect(out); }, impl_);
    return out;
  }

  template <typename T>
  T& as() {
    return std::get<T>(impl_);
  }

 private:
  MixerKind kind_ = MixerKind::vdn;
  std::variant<VdnMixer, QmixMixer, KmarlMixer> impl_;
};

/// Gradient-free joint values for a batch.
inline Matrix evaluate_mixer(Mixer& mixer, const Matrix& q, const MixContext& ctx) {
  Tape tape;
  tape.set_grad_enabled(false);
  return mixer.mix(tape, tape.constant(q), ctx).value();
}

/// Random mixer inputs: utilities uniform in [-q_range, q_range], features
/// uniform in [0,1], symmetric 0/1 adjacency with zero diagonal.
inline void random_mix_inputs(std::size_t batch, std::size_t agents, double q_range, Rng& rng,
                              Matrix& q, MixContext& ctx) {
  q = Matrix(batch, agents);
  for (double& v : q.values()) v = uniform(rng, -q_range, q_range);
  ctx.batch = batch;
  ctx.agents = agents;
  ctx.node_features = Matrix(batch * agents, env::kObservationDim);
  for (double& v : ctx.node_features.values()) v = uniform01(rng);
  ctx.adjacency = Matrix(batch * agents, agents);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < agents; ++i)
      for (std::size_t j = i + 1; j < agents; ++j) {
        const double link = uniform01(rng) < 0.5 ? 1.0 : 0.0;
        ctx.adjacency(b * agents + i, j) = link;
        ctx.adjacency(b * agents + j, i) = link;
      }
}

/// Most negative central-difference estimate of dQ_tot/dq_i over `samples`
/// random inputs and every agent i.
inline double monotonicity_check(Mixer& mixer, std::size_t samples, std::size_t agents, Rng& rng,
                                 double step = 1e-5, double q_range = 5.0) {
  Matrix q;
  MixContext ctx;
  random_mix_inputs(samples, agents, q_range, rng, q, ctx);
  double worst = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < agents; ++i) {
    Matrix up = q, down = q;
    for (std::size_t b = 0; b < samples; ++b) {
      up(b, i) += step;
      down(b, i) -= step;
    }
    const Matrix vu = evaluate_mixer(mixer, up, ctx);
    const Matrix vd = evaluate_mixer(mixer, down, ctx);
    for (std::size_t b = 0; b < samples; ++b) {
      worst = std::min(worst, (vu[b] - vd[b]) / (2.0 * step));
    }
  }
  return worst;
}

}  // namespace kmarl::mixers
