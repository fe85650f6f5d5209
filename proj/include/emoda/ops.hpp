// SPDX-License-Identifier: Apache-2.0
#pragma once

// Differentiable operations. Each returns a new tensor whose backward
// accumulates into the gradients of its inputs.

#include <span>
#include <vector>

#include "emoda/tensor.hpp"

namespace emoda {

// Linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);  // [m×k]·[k×n]
Tensor transpose(const Tensor& a);                // 2-D only
/// Adds a [n] bias to every row of an [m×n] (or [n]) tensor.
Tensor add_bias(const Tensor& x, const Tensor& bias);

// Elementwise, same shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor neg(const Tensor& a);
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
/// x if x > 0 else slope·x, with a learned scalar slope of shape [1].
Tensor prelu(const Tensor& x, const Tensor& slope);
/// Inverted dropout: survivors are scaled by 1/(1-rate). Identity when
/// `train` is false or rate is 0.
Tensor dropout(const Tensor& x, double rate, bool train, Rng& rng);

// Structural.
Tensor concat(std::span<const Tensor> parts);  // along the last axis
Tensor reshape(const Tensor& a, Shape shape);
Tensor row(const Tensor& a, std::size_t index);  // [m×n] -> [n]
Tensor stack_rows(std::span<const Tensor> rows);  // n × [d] -> [n×d]
Tensor mean_rows(const Tensor& a);                // [m×n] -> [n]

// Reductions to a scalar.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// Softmax family over the last axis at temperature tau.
Tensor softmax(const Tensor& logits, double temperature = 1.0);
Tensor log_softmax(const Tensor& logits, double temperature = 1.0);

/// Valid 1-D cross-correlation. input [C_in×T], kernels [C_out×C_in×K],
/// bias [C_out] -> [C_out×T_out] with T_out = (T-K)/stride + 1.
Tensor conv1d(const Tensor& input, const Tensor& kernels, const Tensor& bias, std::size_t stride);

/// Parameters of a single-layer GRU; W_* are [hidden×in], U_* [hidden×hidden].
struct GruWeights {
  Tensor w_z, w_r, w_h;
  Tensor u_z, u_r, u_h;
  Tensor b_z, b_r, b_h;
};

/// Unrolled GRU over seq [T×in] starting from h0 [hidden]; returns all
/// hidden states [T×hidden]. One graph node with hand-written BPTT.
Tensor gru_sequence(const Tensor& seq, const Tensor& h0, const GruWeights& w);

}  // namespace emoda
