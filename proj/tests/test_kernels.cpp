// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>
#include <omp.h>

#include "emoda/kernels.hpp"
#include "support.hpp"

using namespace emoda;
using namespace emoda::kernels;
using emoda::testing::bitwise_equal;
using emoda::testing::random_vector;

namespace {

// Plain triple loop, indexing straight from the storage layout.
std::vector<double> naive_gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k,
                               const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = ta == Trans::kNo ? a[i * k + p] : a[p * m + i];
        const double bv = tb == Trans::kNo ? b[p * n + j] : b[j * k + p];
        s += av * bv;
      }
      c[i * n + j] = s;
    }
  return c;
}

class ThreadCount : public ::testing::Test {
 protected:
  void SetUp() override { saved_ = omp_get_max_threads(); omp_set_num_threads(4); }
  void TearDown() override { omp_set_num_threads(saved_); }
  int saved_ = 1;
};

}  // namespace

TEST_F(ThreadCount, GemmMatchesNaiveLoopForEveryTransposition) {
  Rng rng(3);
  for (auto ta : {Trans::kNo, Trans::kYes})
    for (auto tb : {Trans::kNo, Trans::kYes}) {
      const std::size_t m = 7, n = 5, k = 9;
      const auto a = random_vector(m * k, rng), b = random_vector(k * n, rng);
      std::vector<double> c(m * n);
      gemm(ta, tb, m, n, k, a, b, c, false);
      const auto want = naive_gemm(ta, tb, m, n, k, a, b);
      for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(c[i], want[i], 1e-12);
    }
}

TEST_F(ThreadCount, GemmAccumulateAddsToExistingOutput) {
  Rng rng(4);
  const auto a = random_vector(6, rng), b = random_vector(6, rng);
  std::vector<double> once(4), twice(4);
  gemm(Trans::kNo, Trans::kNo, 2, 2, 3, a, b, once, false);
  gemm(Trans::kNo, Trans::kNo, 2, 2, 3, a, b, twice, false);
  gemm(Trans::kNo, Trans::kNo, 2, 2, 3, a, b, twice, true);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(twice[i], once[i] + once[i]);
}

// Sizes straddle the parallel threshold so both code paths are exercised.
TEST_F(ThreadCount, ParallelGemmIsBitwiseEqualToReference) {
  Rng rng(5);
  for (std::size_t m : {3u, 64u, 200u}) {
    const std::size_t n = 96, k = 130;
    for (auto ta : {Trans::kNo, Trans::kYes})
      for (auto tb : {Trans::kNo, Trans::kYes}) {
        const auto a = random_vector(m * k, rng), b = random_vector(k * n, rng);
        auto c1 = random_vector(m * n, rng);
        auto c2 = c1;
        gemm(ta, tb, m, n, k, a, b, c1, true);
        reference::gemm(ta, tb, m, n, k, a, b, c2, true);
        EXPECT_TRUE(bitwise_equal(c1, c2)) << "m=" << m;
      }
  }
}

TEST_F(ThreadCount, ParallelConvolutionIsBitwiseEqualToReference) {
  Rng rng(6);
  for (const Conv1dGeometry g : {Conv1dGeometry{3, 2, 4, 1, 16}, Conv1dGeometry{41, 64, 10, 2, 300},
                                 Conv1dGeometry{64, 128, 5, 2, 146}}) {
    const auto x = random_vector(g.in_channels * g.length, rng);
    const auto w = random_vector(g.out_channels * g.in_channels * g.kernel, rng);
    const auto b = random_vector(g.out_channels, rng);
    const std::size_t out_n = g.out_channels * g.out_length();
    std::vector<double> y1(out_n), y2(out_n);
    conv1d_forward(g, x, w, b, y1);
    reference::conv1d_forward(g, x, w, b, y2);
    EXPECT_TRUE(bitwise_equal(y1, y2));

    const auto dy = random_vector(out_n, rng);
    std::vector<double> dx1(x.size(), 0.5), dx2(x.size(), 0.5);
    conv1d_backward_input(g, dy, w, dx1);
    reference::conv1d_backward_input(g, dy, w, dx2);
    EXPECT_TRUE(bitwise_equal(dx1, dx2));

    std::vector<double> dw1(w.size(), 0.25), dw2(w.size(), 0.25), db1(b.size(), 1.0), db2(b.size(), 1.0);
    conv1d_backward_weight(g, dy, x, dw1, db1);
    reference::conv1d_backward_weight(g, dy, x, dw2, db2);
    EXPECT_TRUE(bitwise_equal(dw1, dw2));
    EXPECT_TRUE(bitwise_equal(db1, db2));
  }
}

TEST(Conv1dReference, MatchesDirectDefinition) {
  const Conv1dGeometry g{2, 1, 3, 2, 7};
  const std::vector<double> x = {1, 2, 3, 4, 5, 6, 7, 0, 1, 0, 1, 0, 1, 0};
  const std::vector<double> w = {1, 0, -1, 2, 2, 2};
  const std::vector<double> b = {0.5};
  std::vector<double> y(g.out_length());
  ASSERT_EQ(y.size(), 3u);
  reference::conv1d_forward(g, x, w, b, y);
  // Channel 0 contributes x[t] - x[t+2] = -2 everywhere; channel 1 sees 0,1,0 in every window.
  EXPECT_DOUBLE_EQ(y[0], -2.0 + 2.0 + 0.5);
  EXPECT_DOUBLE_EQ(y[1], -2.0 + 2.0 + 0.5);
  EXPECT_DOUBLE_EQ(y[2], -2.0 + 2.0 + 0.5);
}
