// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "emoda/data.hpp"
#include "emoda/kv_config.hpp"
#include "emoda/losses.hpp"
#include "emoda/model.hpp"

namespace emoda {

enum class TrainMode { kSourceOnly, kSourcePlusTarget, kAdversarial, kAdversarialSoftlabel };

std::string_view to_string(TrainMode m);
std::optional<TrainMode> parse_train_mode(std::string_view s);
inline constexpr TrainMode kAllModes[] = {TrainMode::kSourceOnly, TrainMode::kSourcePlusTarget,
                                          TrainMode::kAdversarial, TrainMode::kAdversarialSoftlabel};

struct TrainConfig {
  double lr = 0.001;
  double l2_weight = 0.01;
  std::size_t batch_size = 32;
  std::size_t epochs = 100;
  double tau = 2.0;
  double lambda_conf = 1.0;
  double lambda_soft = 0.1;
  std::size_t warmup_epochs = 10;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::kAdversarialSoftlabel;
  /// Hash every parameter set around each phase and fail on cross-talk.
  bool debug_phase_checks = false;

  void validate() const;
  LossWeights weights() const { return {lambda_conf, lambda_soft}; }
  bool apply(const std::string& key, const std::string& value);
  static std::vector<std::string> keys();
  KeyValues to_map() const;
};

/// Per-parameter Adam moments, allocated on first use.
struct AdamState {
  std::vector<std::vector<double>> m, v;
  std::uint64_t t = 0;
};

/// One Adam update with bias correction over every parameter of `params`,
/// then zeroes their gradients. L2 enters as g += l2_weight·theta on weight
/// and recurrent matrices only. Non-finite gradients raise DivergenceError.
void adam_step(ParamRegistry& params, AdamState& state, const TrainConfig& cfg);

struct EpochRecord {
  std::size_t epoch = 0;
  double l_d = 0.0, l_emo = 0.0, l_conf = 0.0, l_soft = 0.0;  // batch means; NaN when not computed
  double dev_uar = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  std::size_t selected_epoch = 0;
  std::size_t phase_checks = 0;  // phases verified when debug_phase_checks is on
};

void write_train_log_csv(const std::filesystem::path& path, const TrainLog& log);

struct TrainResult {
  ModelBundle best;
  TrainLog log;
  std::optional<SoftLabelTable> softlabels;
};

/// Alternating two-phase optimization. Per batch:
///   A) encoder forward without graph, L_D on the domain classifier, step theta_DC;
///   B) fresh forward, L_emo - lambda_conf·L_conf + lambda_soft·L_soft, step theta_enc and theta_EC.
/// The first warmup_epochs use L_emo alone in phase B; the softlabel table is
/// built from the model at the end of warmup and frozen. Returns the model
/// with the best target-dev UAR (earliest epoch on ties).
/// `model` must be initialized; it ends in its final-epoch state.
TrainResult train(ModelBundle& model, std::span<const UtteranceSample> source,
                  std::span<const UtteranceSample> target_train, std::span<const UtteranceSample> target_dev,
                  const TrainConfig& cfg);

/// Fits a fresh domain classifier on frozen representations of half of the
/// (balanced) source/target samples and returns its accuracy on the other half.
/// Near 0.5 means the domains are indistinguishable.
double domain_probe_accuracy(const ModelBundle& model, std::span<const UtteranceSample> source,
                             std::span<const UtteranceSample> target, std::uint64_t seed);

}  // namespace emoda
