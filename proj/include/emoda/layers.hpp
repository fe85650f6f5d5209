// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "emoda/ops.hpp"
#include "emoda/tensor.hpp"

namespace emoda {

/// How a parameter is initialized and whether L2 applies to it.
enum class ParamKind { kWeight, kRecurrent, kBias, kSlope };

struct NamedParam {
  std::string name;
  Tensor tensor;
  ParamKind kind;
};

/// Ordered set of trainable tensors of one component. Iteration follows
/// registration order.
class ParamRegistry {
 public:
  /// Creates a zero leaf requiring grad and registers it. Throws on duplicate names.
  Tensor add(std::string name, Shape shape, ParamKind kind);

  const std::vector<NamedParam>& params() const { return params_; }
  std::vector<NamedParam>& params() { return params_; }
  const NamedParam* find(std::string_view name) const;
  const Tensor& at(std::string_view name) const;
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  void zero_grad();
  /// True when any parameter holds a nonzero gradient entry.
  bool any_nonzero_grad() const;
  /// FNV-1a over names and raw parameter bytes.
  std::uint64_t hash() const;
  /// Overwrites values (not identity) from a registry with identical layout.
  void copy_values_from(const ParamRegistry& other);

 private:
  std::vector<NamedParam> params_;
};

/// Glorot-uniform weights, zero biases, PReLU slopes 0.25. Deterministic in `seed`.
void init_params(ParamRegistry& registry, std::uint64_t seed);

struct LinearLayer {
  Tensor weight;  // [out×in]
  Tensor bias;    // [out]

  LinearLayer() = default;
  LinearLayer(ParamRegistry& reg, const std::string& prefix, std::size_t in, std::size_t out);
  std::size_t in_features() const { return weight.dim(1); }
  std::size_t out_features() const { return weight.dim(0); }
  Tensor forward(const Tensor& x) const;  // [B×in] -> [B×out]
};

struct PreluLayer {
  Tensor slope;  // [1]

  PreluLayer() = default;
  PreluLayer(ParamRegistry& reg, const std::string& name);
  Tensor forward(const Tensor& x) const { return prelu(x, slope); }
};

struct Conv1dLayer {
  Tensor kernels;  // [out×in×K]
  Tensor bias;     // [out]
  std::size_t stride = 1;

  Conv1dLayer() = default;
  Conv1dLayer(ParamRegistry& reg, const std::string& prefix, std::size_t in_channels,
              std::size_t out_channels, std::size_t kernel, std::size_t stride);
  Tensor forward(const Tensor& x) const { return conv1d(x, kernels, bias, stride); }
};

struct GruOutput {
  Tensor states;  // [T×hidden]
  Tensor last;    // [hidden]
};

struct GruLayer {
  GruWeights w;

  GruLayer() = default;
  GruLayer(ParamRegistry& reg, const std::string& prefix, std::size_t in, std::size_t hidden);
  std::size_t hidden() const { return w.b_z.dim(0); }
  std::size_t input_size() const { return w.w_z.dim(1); }
  GruOutput forward(const Tensor& seq, const Tensor& h0) const;
};

/// One GRU step composed from primitive ops; kept as an independent route to
/// check the fused recurrence.
Tensor gru_step(const GruLayer& layer, const Tensor& x, const Tensor& h_prev);

// Checkpoint: "EDA1", then per parameter: u32 name length, name bytes,
// u32 rank, u32 extents, float64 values. Integers and floats little-endian.
void write_checkpoint(std::ostream& out, const std::vector<std::pair<std::string, Tensor>>& params);
std::vector<std::pair<std::string, Tensor>> read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path,
                     const std::vector<std::pair<std::string, Tensor>>& params);
std::vector<std::pair<std::string, Tensor>> load_checkpoint(const std::filesystem::path& path);

}  // namespace emoda
