// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

#include "emoda/kv_config.hpp"
#include "emoda/sample.hpp"

namespace emoda {

// ---------------------------------------------------------------------------
// Feature files and manifests

/// Feature file: "EDF1", u32 rows, u32 cols, rows*cols float64, little-endian.
void save_features(const std::filesystem::path& path, const Tensor& matrix);
Tensor load_features(const std::filesystem::path& path);

/// CSV with header `id,domain,emotion,elicitation,acoustic_path,visual_path`.
/// Relative feature paths resolve against the manifest's directory.
std::vector<UtteranceSample> load_manifest(const std::filesystem::path& path);

/// Writes `manifest.csv` plus one acoustic and one visual feature file per
/// sample under `dir/features/`.
void write_corpus(const std::filesystem::path& dir, std::span<const UtteranceSample> samples);

std::vector<UtteranceSample> select_by_elicitation(std::span<const UtteranceSample> samples,
                                                   std::span<const Elicitation> tags, Domain relabel_as);

// ---------------------------------------------------------------------------
// Synthetic two-domain corpus

/// Frames follow an AR(1) process around a class mean, shifted by a fixed
/// domain offset in the target domain:
///   x_t = mu_k + [d=T]·delta + rho·(x_{t-1} - mu_k - [d=T]·delta) + eps_t
/// eps_t is Gaussian with variance noise_std²·(1-rho²), so every frame has
/// marginal standard deviation noise_std.
struct SynthConfig {
  std::size_t acoustic_dim = 41;
  std::size_t visual_dim = 512;
  std::array<std::size_t, kNumEmotions> source_counts = {100, 100, 100, 100};
  std::array<std::size_t, kNumEmotions> target_counts = {100, 100, 100, 100};
  double class_separation = 0.6;       // std of class-mean coordinates
  double happy_angry_similarity = 0.5; // 0 keeps independent means, 1 merges Happy into Angry
  double shift_scale = 2.5;            // |delta| for acoustic frames, per coordinate rms
  double visual_shift_scale = 2.5;
  double visual_separation = 0.6;
  double noise_std = 2.0;
  double rho = 0.5;
  std::size_t acoustic_len_min = 24;
  std::size_t acoustic_len_max = 40;
  std::size_t visual_len_min = 4;
  std::size_t visual_len_max = 12;
  double domain_overlap_fraction = 0.0;  // share of target samples drawn without the shift
  std::uint64_t seed = 1;

  /// Small-dimension profile (acoustic 8, visual 16).
  static SynthConfig test_profile();
  void validate() const;
  /// Applies recognised keys; returns false for keys it does not own.
  bool apply(const std::string& key, const std::string& value);
  static std::vector<std::string> keys();
  KeyValues to_map() const;
};

/// Source samples are tagged SYNTH_A, target samples SYNTH_B.
std::vector<UtteranceSample> generate_synthetic(const SynthConfig& cfg);

// ---------------------------------------------------------------------------
// Target split protocol

struct SplitSpec {
  double target_train_fraction = 0.10;
  double target_dev_fraction = 0.40;
  double target_eval_fraction = 0.50;
  std::size_t run_index = 0;
  std::uint64_t seed = 0;

  void validate() const;
  /// Number of runs whose training subsets can be pairwise disjoint.
  std::size_t max_runs() const;
};

struct TargetSplits {
  std::vector<UtteranceSample> train, dev, eval;
};

/// Stratified by emotion. The training slice of run r is the r-th block of a
/// per-class permutation that depends only on `seed`, so the training subsets
/// of different runs never overlap. Dev/eval are redrawn per run from the rest.
TargetSplits make_splits(std::span<const UtteranceSample> target, const SplitSpec& spec);

// ---------------------------------------------------------------------------
// Weighted, domain-balanced batch sampler

using Batch = std::vector<const UtteranceSample*>;

/// Each batch holds batch_size/2 source then batch_size/2 target samples,
/// drawn with replacement; within a pool a sample's weight is inversely
/// proportional to the size of its emotion class. An epoch is
/// ceil(|source| / (batch_size/2)) batches.
class BalancedSampler {
 public:
  BalancedSampler(std::span<const UtteranceSample> source, std::span<const UtteranceSample> target,
                  std::size_t batch_size, std::uint64_t seed);
  /// Whole batches from the source pool only.
  static BalancedSampler source_only(std::span<const UtteranceSample> source, std::size_t batch_size,
                                     std::uint64_t seed);

  Batch next();
  std::size_t epoch_batches() const { return epoch_batches_; }
  std::size_t batch_size() const { return batch_size_; }

 private:
  struct Pool {
    std::span<const UtteranceSample> samples;
    std::discrete_distribution<std::size_t> pick;
  };
  BalancedSampler() = default;
  static Pool make_pool(std::span<const UtteranceSample> samples);

  Pool source_, target_;
  bool with_target_ = true;
  std::size_t batch_size_ = 0;
  std::size_t epoch_batches_ = 0;
  Rng rng_;
};

inline BalancedSampler balanced_batches(std::span<const UtteranceSample> source,
                                        std::span<const UtteranceSample> target_train,
                                        std::size_t batch_size, std::uint64_t seed) {
  return BalancedSampler(source, target_train, batch_size, seed);
}

}  // namespace emoda
