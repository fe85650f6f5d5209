// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <map>

#include "emoda/errors.hpp"
#include "emoda/ops.hpp"
#include "support.hpp"

using namespace emoda;

TEST(Tensor, FactoriesAndShape) {
  const Tensor z = Tensor::zeros({2, 3});
  EXPECT_EQ(z.numel(), 6u);
  EXPECT_EQ(z.rank(), 2u);
  EXPECT_EQ(z.dim(1), 3u);
  EXPECT_THROW((void)z.dim(2), DimensionError);
  EXPECT_THROW(Tensor::from_data({2, 2}, {1, 2, 3}), DimensionError);
  EXPECT_DOUBLE_EQ(Tensor::full({4}, 2.5).data()[3], 2.5);
  EXPECT_DOUBLE_EQ(Tensor::scalar(7).item(), 7.0);
  EXPECT_THROW((void)z.item(), ContractError);
}

TEST(Autodiff, ChainRuleOnSmallExpression) {
  // f = sum(a * b + a) -> df/da = b + 1, df/db = a
  Tensor a = Tensor::from_data({3}, {1, 2, 3}, true);
  Tensor b = Tensor::from_data({3}, {4, 5, 6}, true);
  sum(add(mul(a, b), a)).backward();
  EXPECT_EQ(std::vector<double>(a.grad().begin(), a.grad().end()), (std::vector<double>{5, 6, 7}));
  EXPECT_EQ(std::vector<double>(b.grad().begin(), b.grad().end()), (std::vector<double>{1, 2, 3}));
}

TEST(Autodiff, SharedSubexpressionAccumulates) {
  Tensor x = Tensor::from_data({2}, {0.5, -1.5}, true);
  const Tensor y = tanh(x);
  sum(add(mul(y, y), y)).backward();  // d/dx (y² + y) = (2y + 1)(1 - y²)
  for (std::size_t i = 0; i < 2; ++i) {
    const double t = std::tanh(x.data()[i]);
    EXPECT_NEAR(x.grad()[i], (2 * t + 1) * (1 - t * t), 1e-15);
  }
}

TEST(Autodiff, LeafGradientsAccumulateAcrossBackwardCalls) {
  Tensor w = Tensor::from_data({2}, {0.3, -0.7}, true);
  const Tensor loss = sum(mul(w, w));
  loss.backward();
  const std::vector<double> first(w.grad().begin(), w.grad().end());
  loss.backward();
  for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(w.grad()[i], 2.0 * first[i]);
  w.zero_grad();
  EXPECT_EQ(w.grad()[0], 0.0);
}

TEST(Autodiff, BackwardNeedsScalar) {
  Tensor w = Tensor::from_data({2}, {1, 2}, true);
  EXPECT_THROW(scale(w, 2.0).backward(), ContractError);
}

TEST(Autodiff, NoGradGuardBuildsNoGraph) {
  Tensor w = Tensor::from_data({2}, {1, 2}, true);
  {
    NoGradGuard guard;
    EXPECT_FALSE(NoGradGuard::grad_enabled());
    const Tensor y = mul(w, w);
    EXPECT_FALSE(y.requires_grad());
    EXPECT_TRUE(y.is_leaf());
  }
  EXPECT_TRUE(NoGradGuard::grad_enabled());
  EXPECT_TRUE(mul(w, w).requires_grad());
}

TEST(Autodiff, DetachStopsGradient) {
  Tensor w = Tensor::from_data({1}, {3.0}, true);
  const Tensor y = add(mul(w, w), mul(w.detach(), w.detach()));
  sum(y).backward();
  EXPECT_DOUBLE_EQ(w.grad()[0], 6.0);
}

TEST(Autodiff, TapeIsTopologicallyOrderedAndAcyclic) {
  Tensor a = Tensor::from_data({2}, {1, 2}, true);
  Tensor b = Tensor::from_data({2}, {3, 4}, true);
  const Tensor c = mul(a, b);
  const Tensor d = add(c, a);
  const Tensor root = sum(mul(d, c));
  const GradTape tape = GradTape::record(root);
  const auto& nodes = tape.nodes();
  ASSERT_FALSE(nodes.empty());
  // Every parent precedes its child, which rules out cycles.
  std::map<const detail::Node*, std::size_t> pos;
  for (std::size_t i = 0; i < nodes.size(); ++i) pos[nodes[i].get()] = i;
  for (std::size_t i = 0; i < nodes.size(); ++i)
    for (const auto& p : nodes[i]->parents) EXPECT_LT(pos.at(p.get()), i);
  EXPECT_EQ(nodes.back().get(), root.node().get());
}

TEST(Autodiff, ConstantsDoNotReceiveGradient) {
  Tensor w = Tensor::from_data({2}, {1, 2}, true);
  const Tensor c = Tensor::from_data({2}, {5, 6});
  sum(mul(w, c)).backward();
  EXPECT_FALSE(c.has_grad());
  EXPECT_DOUBLE_EQ(w.grad()[1], 6.0);
}
