#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "kmarl/agents/agent_net.hpp"
#include "kmarl/numkit/grad_check.hpp"

using namespace kmarl;
using namespace kmarl::agents;
using num::Matrix;

TEST(AgentNet, ShapesForAnyAgentCount) {
  Rng rng(41);
  AgentNet net(4, AgentConfig{}, rng);
  for (std::size_t n : {1u, 3u, 17u}) {
    const Matrix q = net.q_matrix(Matrix(n, 4, 0.3));
    EXPECT_EQ(q.rows(), n);
    EXPECT_EQ(q.cols(), 4u);
    EXPECT_TRUE(q.all_finite());
  }
  EXPECT_THROW(net.q_matrix(Matrix(2, 5)), num::ShapeError);
  EXPECT_THROW(AgentNet(0, AgentConfig{}, rng), std::invalid_argument);
}

TEST(AgentNet, SharedParametersGiveIdenticalRowsForIdenticalInputs) {
  Rng rng(42);
  AgentNet net(3, AgentConfig{}, rng);
  Matrix in(2, 4);
  for (std::size_t j = 0; j < 4; ++j) in(0, j) = in(1, j) = 0.1 * static_cast<double>(j + 1);
  const Matrix q = net.q_matrix(in);
  for (std::size_t a = 0; a < 3; ++a) EXPECT_EQ(q(0, a), q(1, a));
  const std::vector<double> row{in(0, 0), in(0, 1), in(0, 2), in(0, 3)};
  EXPECT_EQ(net.q_values(row), (std::vector<double>{q(0, 0), q(0, 1), q(0, 2)}));
}

TEST(AgentNet, GradientCheckAtTenPoints) {
  for (std::uint64_t point = 0; point < 10; ++point) {
    Rng rng(mix_seed(43, point));
    AgentNet net(4, AgentConfig{}, rng);
    Matrix in(3, 4);
    for (double& v : in.values()) v = uniform01(rng);
    const std::size_t picks[] = {0, 3, 1};
    const auto report = num::grad_check(
        [&](num::Tape& t) {
          return num::reduce(num::pick(net.forward(t, t.constant(in)), picks), num::Reduce::sum_all);
        },
        net.params(), 1e-4);
    EXPECT_TRUE(report.passed) << report.max_relative_error << " at " << report.worst_param;
  }
}

TEST(GreedyAction, LowestIndexWinsTies) {
  const double q[] = {1.0, 3.0, 3.0, -2.0};
  EXPECT_EQ(greedy_action(q), 1u);
  const double flat[] = {0.0, 0.0};
  EXPECT_EQ(greedy_action(flat), 0u);
}

TEST(SelectAction, EpsilonZeroIsGreedy) {
  Rng rng(44);
  const double q[] = {0.1, 0.5, -1.0};
  for (int i = 0; i < 100; ++i) EXPECT_EQ(select_action(q, 0.0, rng), 1u);
  EXPECT_THROW(select_action(q, 1.5, rng), std::invalid_argument);
  EXPECT_THROW(select_action(q, -0.1, rng), std::invalid_argument);
}

TEST(SelectAction, EpsilonOneIsUniform) {
  // Chi-square with 3 degrees of freedom; 16.27 is the 0.999 quantile.
  Rng rng(45);
  const double q[] = {0.0, 9.0, 0.0, 0.0};
  const int draws = 40000;
  std::vector<int> counts(4, 0);
  for (int i = 0; i < draws; ++i) ++counts[select_action(q, 1.0, rng)];
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - draws / 4.0) * (c - draws / 4.0) / (draws / 4.0);
  EXPECT_LT(chi2, 16.27);
}

TEST(SelectAction, MixedEpsilonFrequency) {
  Rng rng(46);
  const double q[] = {0.0, 9.0, 0.0, 0.0};
  const int draws = 40000;
  int greedy = 0;
  for (int i = 0; i < draws; ++i) greedy += select_action(q, 0.4, rng) == 1 ? 1 : 0;
  const double p = 0.6 + 0.4 / 4.0;
  EXPECT_NEAR(greedy / static_cast<double>(draws), p, 4.0 * std::sqrt(p * (1 - p) / draws));
}

TEST(EpsilonSchedule, LinearThenFlat) {
  const EpsilonSchedule s;
  EXPECT_EQ(s.at(0, 100), 1.0);
  EXPECT_NEAR(s.at(25, 100), 0.525, 1e-12);
  EXPECT_EQ(s.at(50, 100), 0.05);
  EXPECT_EQ(s.at(99, 100), 0.05);
  for (std::size_t e = 1; e < 100; ++e) EXPECT_LE(s.at(e, 100), s.at(e - 1, 100));
}

TEST(ObservationStack, NewestFirstAndPrefilled) {
  ObservationStack stack(3);
  stack.reset(Matrix(2, 4, 1.0));
  EXPECT_EQ(stack.inputs(), Matrix(2, 12, 1.0));
  stack.push(Matrix(2, 4, 2.0));
  const Matrix in = stack.inputs();
  EXPECT_EQ(in(0, 0), 2.0);
  EXPECT_EQ(in(1, 4), 1.0);
  stack.push(Matrix(2, 4, 3.0));
  stack.push(Matrix(2, 4, 4.0));
  const Matrix later = stack.inputs();
  EXPECT_EQ(later(0, 0), 4.0);
  EXPECT_EQ(later(0, 4), 3.0);
  EXPECT_EQ(later(0, 8), 2.0);
}
