// SPDX-License-Identifier: Apache-2.0
#pragma once

// Central finite-difference checks of analytic gradients.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "emoda/tensor.hpp"

namespace emoda {

using ScalarFn = std::function<Tensor(std::span<const Tensor>)>;

struct GradCheckOptions {
  double step = 1e-5;
  double rel_tol = 1e-6;
  /// Gradients smaller than this are compared on this absolute scale instead.
  double scale_floor = 1e-3;
  /// Check at most this many coordinates per input (0 = all).
  std::size_t max_coords = 0;
  std::uint64_t coord_seed = 0;
};

struct GradCheckResult {
  std::string name;
  std::size_t instances = 0;
  std::size_t coordinates = 0;
  double max_error = 0.0;  // |analytic - numeric| / max(|analytic|, |numeric|, scale_floor)
  double tolerance = 0.0;
  bool passed = true;
};

/// Compares d f / d inputs from backward() against central differences.
/// `inputs` must be leaves that require grad; their grads are overwritten.
GradCheckResult check_gradients(const std::string& name, const ScalarFn& f, std::span<Tensor> inputs,
                                const GradCheckOptions& opts = {});

/// Central-difference gradient of f w.r.t. one input, all coordinates.
std::vector<double> numeric_gradient(const ScalarFn& f, std::span<Tensor> inputs, std::size_t which,
                                     double step = 1e-5);

/// Every differentiable operation, layer, loss and composed model path,
/// each on `instances` random instances at test dimensions.
std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed, std::size_t instances = 10);

}  // namespace emoda
