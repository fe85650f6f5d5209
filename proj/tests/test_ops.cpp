// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "emoda/errors.hpp"
#include "emoda/gradcheck.hpp"
#include "emoda/layers.hpp"
#include "emoda/ops.hpp"
#include "support.hpp"

using namespace emoda;
using emoda::testing::random_tensor;

TEST(Ops, MatmulShapesAndValues) {
  const Tensor a = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  const Tensor b = Tensor::from_data({3, 1}, {1, 0, -1});
  const Tensor c = matmul(a, b);
  EXPECT_EQ(c.shape(), (Shape{2, 1}));
  EXPECT_DOUBLE_EQ(c.data()[0], -2.0);
  EXPECT_DOUBLE_EQ(c.data()[1], -2.0);
  EXPECT_THROW(matmul(a, a), DimensionError);
}

TEST(Ops, SoftmaxRowsSumToOneAndAreStable) {
  const Tensor z = Tensor::from_data({2, 3}, {1000, 1001, 1002, -5, 0, 5});
  for (double tau : {1.0, 2.0, 0.5}) {
    const Tensor p = softmax(z, tau);
    for (std::size_t r = 0; r < 2; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < 3; ++c) {
        EXPECT_TRUE(std::isfinite(p.data()[r * 3 + c]));
        s += p.data()[r * 3 + c];
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
    const Tensor lp = log_softmax(z, tau);
    for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(std::exp(lp.data()[i]), p.data()[i], 1e-12);
  }
}

TEST(Ops, TemperatureFlattensDistribution) {
  const Tensor z = Tensor::from_data({1, 3}, {0, 1, 3});
  const double sharp = softmax(z, 1.0).data()[2];
  const double soft = softmax(z, 4.0).data()[2];
  EXPECT_GT(sharp, soft);
  EXPECT_THROW(softmax(z, 0.0), ParameterError);
  EXPECT_THROW(log_softmax(z, -1.0), ParameterError);
}

TEST(Ops, LogRejectsNonPositive) {
  EXPECT_THROW(log(Tensor::from_data({2}, {1.0, 0.0})), DomainError);
  EXPECT_THROW(log(Tensor::from_data({1}, {-2.0})), DomainError);
}

TEST(Ops, PreluUsesSlopeOnNegativeSide) {
  const Tensor x = Tensor::from_data({4}, {-2, -0.5, 0.5, 3});
  const Tensor y = prelu(x, Tensor::from_data({1}, {0.25}));
  EXPECT_EQ(std::vector<double>(y.data().begin(), y.data().end()), (std::vector<double>{-0.5, -0.125, 0.5, 3}));
}

TEST(Ops, DropoutIsIdentityOutsideTrainingAndScalesInside) {
  Rng rng(1);
  const Tensor x = Tensor::full({1000}, 1.0);
  const Tensor eval = dropout(x, 0.5, false, rng);
  EXPECT_TRUE(emoda::testing::bitwise_equal(eval.data(), x.data()));
  const Tensor zero_rate = dropout(x, 0.0, true, rng);
  EXPECT_TRUE(emoda::testing::bitwise_equal(zero_rate.data(), x.data()));
  const Tensor y = dropout(x, 0.5, true, rng);
  std::size_t kept = 0;
  for (double v : y.data()) {
    EXPECT_TRUE(v == 0.0 || v == 2.0);
    kept += v != 0.0;
  }
  EXPECT_NEAR(static_cast<double>(kept) / 1000.0, 0.5, 0.06);
  EXPECT_THROW(dropout(x, 1.0, true, rng), ParameterError);
  EXPECT_THROW(dropout(x, -0.1, true, rng), ParameterError);
}

TEST(Ops, Conv1dOutputLengthAndShortInput) {
  Rng rng(2);
  const Tensor x = random_tensor({3, 20}, rng);
  const Tensor k = random_tensor({4, 3, 5}, rng);
  const Tensor b = random_tensor({4}, rng);
  EXPECT_EQ(conv1d(x, k, b, 2).shape(), (Shape{4, 8}));
  EXPECT_EQ(conv1d(x, k, b, 1).shape(), (Shape{4, 16}));
  try {
    conv1d(random_tensor({3, 4}, rng), k, b, 1);
    FAIL() << "expected SequenceTooShortError";
  } catch (const SequenceTooShortError& e) {
    EXPECT_EQ(e.required(), 5u);
  }
}

TEST(Ops, ConcatAndStructuralOps) {
  const Tensor a = Tensor::from_data({2}, {1, 2});
  const Tensor b = Tensor::from_data({3}, {3, 4, 5});
  const Tensor parts[] = {a, b};
  const Tensor c = concat(parts);
  EXPECT_EQ(c.shape(), (Shape{5}));
  EXPECT_DOUBLE_EQ(c.data()[4], 5.0);
  const Tensor m = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  EXPECT_DOUBLE_EQ(transpose(m).data()[1], 3.0);
  EXPECT_DOUBLE_EQ(mean_rows(m).data()[0], 2.0);
  EXPECT_DOUBLE_EQ(row(m, 1).data()[0], 3.0);
  EXPECT_DOUBLE_EQ(mean(m).item(), 2.5);
  EXPECT_THROW(reshape(m, {3}), DimensionError);
}

TEST(Ops, GruSequenceMatchesComposedSteps) {
  Rng rng(3);
  const std::size_t in = 3, h = 4, t = 6;
  GruWeights w{random_tensor({h, in}, rng, 0.5), random_tensor({h, in}, rng, 0.5), random_tensor({h, in}, rng, 0.5),
               random_tensor({h, h}, rng, 0.5),  random_tensor({h, h}, rng, 0.5),  random_tensor({h, h}, rng, 0.5),
               random_tensor({h}, rng, 0.2),     random_tensor({h}, rng, 0.2),     random_tensor({h}, rng, 0.2)};
  const Tensor seq = random_tensor({t, in}, rng);
  const Tensor h0 = random_tensor({h}, rng);
  const Tensor fused = gru_sequence(seq, h0, w);
  GruLayer layer;
  layer.w = w;
  Tensor state = h0;
  for (std::size_t i = 0; i < t; ++i) {
    state = gru_step(layer, row(seq, i), state);
    for (std::size_t j = 0; j < h; ++j) EXPECT_NEAR(fused.data()[i * h + j], state.data()[j], 1e-14);
  }
}

// Finite-difference self test: the checker must flag a deliberately wrong gradient.
TEST(GradCheck, DetectsWrongGradient) {
  Tensor x = Tensor::from_data({3}, {0.3, -0.2, 0.9}, true);
  Tensor inputs[] = {x};
  const ScalarFn right = [](std::span<const Tensor> in) { return sum(mul(in[0], in[0])); };
  EXPECT_TRUE(check_gradients("square", right, inputs, {}).passed);
  // Scaling by a constant through `detach` hides part of the derivative.
  const ScalarFn wrong = [](std::span<const Tensor> in) { return sum(mul(in[0], in[0].detach())); };
  EXPECT_FALSE(check_gradients("square-detached", wrong, inputs, {}).passed);
}

TEST(GradCheck, NumericGradientOfQuadratic) {
  Tensor x = Tensor::from_data({2}, {1.5, -2.0}, true);
  Tensor inputs[] = {x};
  const auto g = numeric_gradient([](std::span<const Tensor> in) { return sum(mul(in[0], in[0])); }, inputs, 0, 1e-5);
  EXPECT_NEAR(g[0], 3.0, 1e-8);
  EXPECT_NEAR(g[1], -4.0, 1e-8);
}
