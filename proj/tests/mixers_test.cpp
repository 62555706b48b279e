#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "kmarl/agents/agent_net.hpp"
#include "kmarl/mixers/mixers.hpp"
#include "kmarl/numkit/grad_check.hpp"

using namespace kmarl;
using namespace kmarl::mixers;
using num::Matrix;
using num::Tape;

namespace {

std::vector<std::size_t> random_permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[uniform_index(rng, i)]);
  return p;
}

// New agent k is old agent p[k], for a single-sample context.
void permute(const std::vector<std::size_t>& p, const Matrix& q, const MixContext& ctx,
             Matrix& q_out, MixContext& ctx_out) {
  const std::size_t n = p.size();
  q_out = Matrix(1, n);
  ctx_out = ctx;
  for (std::size_t k = 0; k < n; ++k) {
    q_out(0, k) = q(0, p[k]);
    for (std::size_t j = 0; j < ctx.node_features.cols(); ++j)
      ctx_out.node_features(k, j) = ctx.node_features(p[k], j);
    for (std::size_t m = 0; m < n; ++m) ctx_out.adjacency(k, m) = ctx.adjacency(p[k], p[m]);
  }
}

double relative_change(double a, double b) {
  return std::abs(a - b) / std::max(std::abs(a), 1e-12);
}

Mixer make(MixerKind kind, std::size_t agents, std::uint64_t seed, bool nonneg = true) {
  Rng rng(seed);
  MixerConfig cfg;
  cfg.kind = kind;
  cfg.nonnegative_weights = nonneg;
  return Mixer(agents, cfg, rng);
}

double mix_one(Mixer& m, const Matrix& q, const MixContext& ctx) {
  return evaluate_mixer(m, q, ctx)[0];
}

}  // namespace

TEST(MixerKind, ParseRoundTrip) {
  for (MixerKind k : {MixerKind::vdn, MixerKind::qmix, MixerKind::kmarl})
    EXPECT_EQ(parse_mixer_kind(to_string(k)), k);
  EXPECT_THROW(parse_mixer_kind("qtran"), std::invalid_argument);
}

TEST(Vdn, SumExamples) {
  Mixer m = make(MixerKind::vdn, 3, 1);
  MixContext ctx = MixContext::single(Matrix(3, 4), Matrix(3, 3));
  EXPECT_EQ(mix_one(m, Matrix{{2.0, 3.0, 5.0}}, ctx), 10.0);
  EXPECT_EQ(mix_one(m, Matrix{{5.0, 2.0, 3.0}}, ctx), 10.0);
  EXPECT_EQ(mix_one(m, Matrix(1, 3), ctx), 0.0);
  EXPECT_TRUE(m.params().empty());
}

TEST(Qmix, ForcedWeightsGiveEluOfSum) {
  Mixer m = make(MixerKind::qmix, 3, 2);
  auto& h = m.as<QmixMixer>().hypernet();
  const std::size_t hidden = h.b1.bias.value.cols();
  for (num::Dense* d : {&h.w1, &h.b1, &h.w2}) {
    d->weight.value.fill(0.0);
    d->bias.value.fill(0.0);
  }
  for (std::size_t a = 0; a < 3; ++a) h.w1.bias.value(0, a * hidden) = 1.0;
  h.w2.bias.value(0, 0) = 1.0;
  num::Dense& last = h.b2.layers.back();
  last.weight.value.fill(0.0);
  last.bias.value.fill(0.0);

  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    Matrix q(1, 3);
    MixContext ctx;
    random_mix_inputs(1, 3, 4.0, rng, q, ctx);
    const double s = q[0] + q[1] + q[2];
    const double expected = s > 0 ? s : std::expm1(s);
    EXPECT_NEAR(mix_one(m, q, ctx), expected, 1e-14);
  }
}

TEST(Qmix, RejectsWrongAgentCount) {
  Mixer m = make(MixerKind::qmix, 3, 4);
  Rng rng(5);
  Matrix q;
  MixContext ctx;
  random_mix_inputs(1, 4, 1.0, rng, q, ctx);
  EXPECT_THROW(evaluate_mixer(m, q, ctx), num::ShapeError);
}

TEST(Qmix, PermutationWitnessExists) {
  Mixer m = make(MixerKind::qmix, 4, 6);
  Rng rng(7);
  double largest = 0.0;
  for (int t = 0; t < 1000 && largest <= 1e-3; ++t) {
    Matrix q, pq;
    MixContext ctx, pctx;
    random_mix_inputs(1, 4, 5.0, rng, q, ctx);
    permute(random_permutation(4, rng), q, ctx, pq, pctx);
    largest = std::max(largest, std::abs(mix_one(m, q, ctx) - mix_one(m, pq, pctx)));
  }
  EXPECT_GT(largest, 1e-3);
}

TEST(Kmarl, PermutationInvariance) {
  for (std::size_t n : {2u, 8u, 24u}) {
    Mixer kmarl = make(MixerKind::kmarl, n, 8);
    Mixer vdn = make(MixerKind::vdn, n, 8);
    Rng rng(9 + n);
    double worst = 0.0;
    for (int t = 0; t < 1000; ++t) {
      Matrix q, pq;
      MixContext ctx, pctx;
      random_mix_inputs(1, n, 5.0, rng, q, ctx);
      permute(random_permutation(n, rng), q, ctx, pq, pctx);
      worst = std::max(worst, relative_change(mix_one(kmarl, q, ctx), mix_one(kmarl, pq, pctx)));
      EXPECT_NEAR(mix_one(vdn, q, ctx), mix_one(vdn, pq, pctx), 1e-12);
    }
    EXPECT_LE(worst, 1e-10) << "agents " << n;
  }
}

TEST(Kmarl, AcceptsAnyAgentCountWithOneParameterSet) {
  Mixer m = make(MixerKind::kmarl, 4, 10);
  Rng rng(11);
  for (std::size_t n : {1u, 4u, 13u}) {
    Matrix q;
    MixContext ctx;
    random_mix_inputs(3, n, 1.0, rng, q, ctx);
    const Matrix out = evaluate_mixer(m, q, ctx);
    EXPECT_EQ(out.rows(), 3u);
    EXPECT_TRUE(out.all_finite());
  }
}

TEST(Kmarl, SingleAgentUsesSelfChainEmbedding) {
  // With one node the pooled embedding is relu(relu(x W_self0) W_self1).
  Mixer m = make(MixerKind::kmarl, 1, 12);
  auto& k = m.as<KmarlMixer>();
  const Matrix x{{0.2, 0.7, 0.1, 0.9}};
  MixContext ctx = MixContext::single(x, Matrix(1, 1));
  Tape tape;
  const Matrix e = k.embed(tape, ctx).value();
  Matrix h = x;
  for (auto& layer : k.encoder().layers()) {
    h = num::multiply(h, layer.w_self.value);
    for (double& v : h.values()) v = std::max(v, 0.0);
  }
  EXPECT_LT(num::max_abs_diff(e, h), 1e-14);
}

TEST(Kmarl, BatchedMatchesPerSample) {
  Mixer m = make(MixerKind::kmarl, 5, 13);
  Rng rng(14);
  Matrix q;
  MixContext ctx;
  random_mix_inputs(6, 5, 2.0, rng, q, ctx);
  const Matrix batched = evaluate_mixer(m, q, ctx);
  for (std::size_t b = 0; b < 6; ++b) {
    Matrix qb(1, 5), fb(5, 4), ab(5, 5);
    for (std::size_t i = 0; i < 5; ++i) {
      qb(0, i) = q(b, i);
      for (std::size_t j = 0; j < 4; ++j) fb(i, j) = ctx.node_features(b * 5 + i, j);
      for (std::size_t j = 0; j < 5; ++j) ab(i, j) = ctx.adjacency(b * 5 + i, j);
    }
    EXPECT_NEAR(mix_one(m, qb, MixContext::single(fb, ab)), batched[b], 1e-13);
  }
}

TEST(Gnn, LayerHandExamples) {
  Rng rng(15);
  GnnLayerParams layer("g", 3, 3, rng);
  const Matrix h{{1.0, 2.0, 3.0}, {-4.0, 5.0, 0.5}};
  Tape tape;

  layer.w_self.value = Matrix::identity(3);
  layer.w_other.value = Matrix(3, 3);
  Matrix out = gnn_layer(tape, tape.constant(h), tape.constant(Matrix(2, 2)), layer,
                         num::Activation::identity)
                   .value();
  EXPECT_EQ(out, h);

  layer.w_self.value = Matrix(3, 3);
  layer.w_other.value = Matrix::identity(3);
  const Matrix complete{{0.0, 1.0}, {1.0, 0.0}};
  out = gnn_layer(tape, tape.constant(h), tape.constant(complete), layer, num::Activation::identity)
            .value();
  EXPECT_EQ(out, (Matrix{{-2.0, 2.5, 0.25}, {0.5, 1.0, 1.5}}));

  EXPECT_THROW(gnn_layer(tape, tape.constant(h), tape.constant(Matrix(3, 3)), layer,
                         num::Activation::relu),
               num::ShapeError);
}

TEST(Gnn, EquivarianceForEachDepth) {
  for (std::size_t depth : {1u, 2u, 3u}) {
    Rng rng(16 + depth);
    GnnConfig cfg;
    cfg.layers = depth;
    GnnEncoder enc("g", 4, cfg, rng);
    for (int t = 0; t < 50; ++t) {
      const std::size_t n = 2 + uniform_index(rng, 9);
      Matrix q, pq;
      MixContext ctx, pctx;
      random_mix_inputs(1, n, 1.0, rng, q, ctx);
      const auto p = random_permutation(n, rng);
      permute(p, q, ctx, pq, pctx);
      Tape tape;
      const Matrix h = enc.nodes(tape, tape.constant(ctx.node_features), tape.constant(ctx.adjacency)).value();
      const Matrix ph =
          enc.nodes(tape, tape.constant(pctx.node_features), tape.constant(pctx.adjacency)).value();
      for (std::size_t k = 0; k < n; ++k)
        for (std::size_t j = 0; j < h.cols(); ++j) EXPECT_NEAR(ph(k, j), h(p[k], j), 1e-10);
    }
  }
}

TEST(Gnn, PoolingIsPermutationInvariant) {
  for (num::Reduce pool : {num::Reduce::mean_rows, num::Reduce::max_rows}) {
    Rng rng(20);
    GnnConfig cfg;
    cfg.pooling = pool;
    GnnEncoder enc("g", 4, cfg, rng);
    Matrix q, pq;
    MixContext ctx, pctx;
    random_mix_inputs(1, 7, 1.0, rng, q, ctx);
    permute(random_permutation(7, rng), q, ctx, pq, pctx);
    Tape tape;
    const Matrix e = enc.embed(tape, tape.constant(ctx.node_features), tape.constant(ctx.adjacency)).value();
    const Matrix pe =
        enc.embed(tape, tape.constant(pctx.node_features), tape.constant(pctx.adjacency)).value();
    EXPECT_EQ(e.cols(), cfg.width);
    EXPECT_LT(num::max_abs_diff(e, pe), 1e-14);
  }
}

TEST(Monotonicity, VdnPartialsAreOne) {
  Mixer m = make(MixerKind::vdn, 5, 21);
  Rng rng(22);
  EXPECT_NEAR(monotonicity_check(m, 100, 5, rng), 1.0, 1e-9);
}

TEST(Monotonicity, FreshMixersAreMonotone) {
  for (MixerKind kind : {MixerKind::qmix, MixerKind::kmarl}) {
    Mixer m = make(kind, 6, 23);
    Rng rng(24);
    EXPECT_GE(monotonicity_check(m, 1000, 6, rng), -1e-6) << to_string(kind);
  }
}

TEST(Monotonicity, RemovingAbsIsDetected) {
  for (MixerKind kind : {MixerKind::qmix, MixerKind::kmarl}) {
    Mixer m = make(kind, 6, 25, /*nonneg=*/false);
    Rng rng(26);
    EXPECT_LT(monotonicity_check(m, 1000, 6, rng), -1e-3) << to_string(kind);
  }
}

TEST(GradCheck, QmixMixerAtTenPoints) {
  for (std::uint64_t point = 0; point < 10; ++point) {
    Mixer m = make(MixerKind::qmix, 3, mix_seed(27, point));
    Rng rng(mix_seed(28, point));
    Matrix q;
    MixContext ctx;
    random_mix_inputs(4, 3, 2.0, rng, q, ctx);
    const auto params = m.params();
    const auto report = num::grad_check(
        [&](Tape& t) { return num::reduce(m.mix(t, t.constant(q), ctx), num::Reduce::sum_all); },
        params, 1e-4);
    EXPECT_TRUE(report.passed) << report.max_relative_error << " at " << report.worst_param;
  }
}

TEST(GradCheck, FullKmarlCompositionAtTenPoints) {
  for (std::uint64_t point = 0; point < 10; ++point) {
    Rng rng(mix_seed(29, point));
    agents::AgentNet net(4, agents::AgentConfig{}, rng);
    MixerConfig cfg;
    Mixer m(3, cfg, rng);
    Matrix q;
    MixContext ctx;
    random_mix_inputs(2, 3, 1.0, rng, q, ctx);
    const std::vector<std::size_t> actions{0, 2, 3, 1, 1, 0};
    std::vector<num::Param*> params = net.params();
    for (num::Param* p : m.params()) params.push_back(p);
    const auto report = num::grad_check(
        [&](Tape& t) {
          num::Var util = num::reshape(num::pick(net.forward(t, t.constant(ctx.node_features)), actions), 2, 3);
          num::Var out = m.mix(t, util, ctx);
          return num::mse(out, t.constant(Matrix{{0.3}, {-0.7}}));
        },
        params, 1e-4);
    EXPECT_TRUE(report.passed) << report.max_relative_error << " at " << report.worst_param;
  }
}
