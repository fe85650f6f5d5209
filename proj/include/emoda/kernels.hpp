// SPDX-License-Identifier: Apache-2.0
#pragma once

// Dense float64 compute kernels used by the autodiff ops.
//
// Every kernel exists twice: an OpenMP-parallel version in `emoda::kernels`
// and a plain serial version in `emoda::kernels::reference`. Parallel loops
// only split over independent output rows/channels, and each output element
// is accumulated in the same order as the reference, so both produce
// bitwise-identical results regardless of thread count.

#include <cstddef>
#include <span>

namespace emoda::kernels {

enum class Trans { kNo, kYes };

/// C[m×n] = op(A)[m×k] · op(B)[k×n]; with `accumulate` the product is added to C.
/// A is stored m×k (or k×m when transposed), B is k×n (or n×k), all row-major.
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k,
          std::span<const double> a, std::span<const double> b, std::span<double> c,
          bool accumulate);

struct Conv1dGeometry {
  std::size_t in_channels;
  std::size_t out_channels;
  std::size_t kernel;
  std::size_t stride;
  std::size_t length;  // input time steps

  std::size_t out_length() const { return (length - kernel) / stride + 1; }
};

/// Valid cross-correlation: out[o][t] = b[o] + sum_c sum_k w[o][c][k] * in[c][t*stride + k].
void conv1d_forward(const Conv1dGeometry& g, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> out);

/// Accumulates the input gradient.
void conv1d_backward_input(const Conv1dGeometry& g, std::span<const double> dout,
                           std::span<const double> weight, std::span<double> dinput);

/// Accumulates kernel and bias gradients.
void conv1d_backward_weight(const Conv1dGeometry& g, std::span<const double> dout,
                            std::span<const double> input, std::span<double> dweight,
                            std::span<double> dbias);

namespace reference {

void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k,
          std::span<const double> a, std::span<const double> b, std::span<double> c,
          bool accumulate);
void conv1d_forward(const Conv1dGeometry& g, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> out);
void conv1d_backward_input(const Conv1dGeometry& g, std::span<const double> dout,
                           std::span<const double> weight, std::span<double> dinput);
void conv1d_backward_weight(const Conv1dGeometry& g, std::span<const double> dout,
                            std::span<const double> input, std::span<double> dweight,
                            std::span<double> dbias);

}  // namespace reference
}  // namespace emoda::kernels
