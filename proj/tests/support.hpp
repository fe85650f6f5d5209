// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <bit>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "emoda/data.hpp"
#include "emoda/tensor.hpp"

namespace emoda::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double sd = 1.0, bool grad = false) {
  std::normal_distribution<double> d(0.0, sd);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = d(rng);
  return Tensor::from_data(std::move(shape), std::move(v), grad);
}

inline std::vector<double> random_vector(std::size_t n, Rng& rng) {
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

inline bool bitwise_equal(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](double x, double y) {
           return std::bit_cast<std::uint64_t>(x) == std::bit_cast<std::uint64_t>(y);
         });
}

/// Small synthetic corpus with per-class counts `n` in both domains.
inline std::vector<UtteranceSample> small_corpus(std::size_t n, std::uint64_t seed, double shift = 1.5) {
  SynthConfig c = SynthConfig::test_profile();
  c.source_counts = {n, n, n, n};
  c.target_counts = {n, n, n, n};
  c.shift_scale = shift;
  c.visual_shift_scale = shift;
  c.seed = seed;
  return generate_synthetic(c);
}

inline std::vector<UtteranceSample> of_domain(const std::vector<UtteranceSample>& all, Domain d) {
  std::vector<UtteranceSample> out;
  for (const auto& s : all)
    if (s.domain == d) out.push_back(s);
  return out;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("emoda_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace emoda::testing
