// SPDX-License-Identifier: Apache-2.0
#pragma once

// Encoder (ENC), emotion classifier (EC) and domain classifier (DC).
//
//   acoustic [T×41] -> Conv1D(41→64,k10,s2) PReLU -> Conv1D(64→128,k5,s2) PReLU -> GRU(128)
//   visual   [T×512] -> GRU(512)
//   concat(640) -> Linear(640→128) PReLU Dropout -> Linear(128→128) = enc(x)
//   EC: Linear(128→32) PReLU Linear(32→10) PReLU Linear(10→4)
//   DC: Linear(128→32) PReLU Linear(32→10) PReLU Linear(10→2)

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "emoda/layers.hpp"
#include "emoda/sample.hpp"

namespace emoda {

enum class Pooling { kLast, kMean };

struct ModelConfig {
  std::size_t acoustic_dim = 41;
  std::size_t visual_dim = 512;
  std::size_t conv1_channels = 64;
  std::size_t conv1_kernel = 10;
  std::size_t conv1_stride = 2;
  std::size_t conv2_channels = 128;  // also the acoustic GRU width
  std::size_t conv2_kernel = 5;
  std::size_t conv2_stride = 2;
  std::size_t visual_hidden = 512;
  std::size_t repr_dim = 128;
  std::size_t classifier_hidden1 = 32;
  std::size_t classifier_hidden2 = 10;
  std::size_t num_emotions = 4;
  std::size_t num_domains = 2;
  double dropout_rate = 0.5;
  Pooling pooling = Pooling::kLast;

  /// Small profile used by fast tests: acoustic 8, visual 16, every hidden width 16.
  static ModelConfig test_profile();

  void validate() const;
  /// Minimum acoustic frames the two valid convolutions can consume.
  std::size_t min_acoustic_length() const;

  std::map<std::string, std::string> to_map() const;
  static ModelConfig from_map(const std::map<std::string, std::string>& kv);
  bool operator==(const ModelConfig&) const = default;
};

struct EncoderLayers {
  Conv1dLayer conv1;
  PreluLayer act1;
  Conv1dLayer conv2;
  PreluLayer act2;
  GruLayer acoustic_gru;
  GruLayer visual_gru;
  LinearLayer merge1;
  PreluLayer merge_act;
  LinearLayer merge2;
};

struct ClassifierLayers {
  LinearLayer fc1;
  PreluLayer act1;
  LinearLayer fc2;
  PreluLayer act2;
  LinearLayer out;

  Tensor forward(const Tensor& x) const;  // [B×repr] -> [B×classes]
};

/// Linear-PReLU-Linear-PReLU-Linear head registered under `prefix`.
ClassifierLayers make_classifier_head(ParamRegistry& reg, const std::string& prefix, std::size_t in,
                                      std::size_t hidden1, std::size_t hidden2, std::size_t classes);

/// Three disjoint parameter sets: encoder, emotion classifier, domain classifier.
/// Move-only; use clone() for an independent copy.
class ModelBundle {
 public:
  explicit ModelBundle(ModelConfig config);
  ModelBundle(ModelBundle&&) = default;
  ModelBundle& operator=(ModelBundle&&) = default;
  ModelBundle(const ModelBundle&) = delete;
  ModelBundle& operator=(const ModelBundle&) = delete;

  ModelBundle clone() const;
  void init(std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ParamRegistry& enc_params() { return enc_; }
  ParamRegistry& ec_params() { return ec_; }
  ParamRegistry& dc_params() { return dc_; }
  const ParamRegistry& enc_params() const { return enc_; }
  const ParamRegistry& ec_params() const { return ec_; }
  const ParamRegistry& dc_params() const { return dc_; }
  const EncoderLayers& encoder() const { return encoder_; }
  const ClassifierLayers& emotion_head() const { return emotion_; }
  const ClassifierLayers& domain_head() const { return domain_; }

  /// All parameters, encoder first, in registration order.
  std::vector<std::pair<std::string, Tensor>> named_params() const;
  void load_params(const std::vector<std::pair<std::string, Tensor>>& params);
  void zero_grad();

 private:
  ModelConfig config_;
  ParamRegistry enc_, ec_, dc_;
  EncoderLayers encoder_;
  ClassifierLayers emotion_, domain_;
};

/// Representation of one sample, shape [repr_dim].
Tensor encode(const ModelBundle& model, const UtteranceSample& sample, bool train, Rng& rng);
/// Representations of several samples stacked to [B×repr_dim].
Tensor encode_batch(const ModelBundle& model, std::span<const UtteranceSample* const> batch,
                    bool train, Rng& rng);
/// Accept [repr] or [B×repr]; return logits of matching rank.
Tensor emotion_logits(const ModelBundle& model, const Tensor& repr);
Tensor domain_logits(const ModelBundle& model, const Tensor& repr);

/// Model directory layout: model.cfg (key=value ModelConfig) + params.eda.
void save_model(const std::filesystem::path& dir, const ModelBundle& model);
ModelBundle load_model(const std::filesystem::path& dir);

}  // namespace emoda
