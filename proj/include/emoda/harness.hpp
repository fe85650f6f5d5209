// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "emoda/data.hpp"
#include "emoda/metrics.hpp"
#include "emoda/trainer.hpp"

namespace emoda {

/// One source→target combination run under several training modes.
/// With an empty `manifest` the synthetic generator provides the corpus and
/// the tags default to SYNTH_A → SYNTH_B.
struct ExperimentSpec {
  std::string name = "synthetic";
  std::vector<Elicitation> source_tags = {Elicitation::kSynthA};
  Elicitation target_tag = Elicitation::kSynthB;
  std::vector<TrainMode> modes = {std::begin(kAllModes), std::end(kAllModes)};
  std::size_t runs = 5;
  std::filesystem::path manifest;
  std::string model_profile = "test";  // "test" (small widths) or "full"
  std::uint64_t split_seed = 0;
  bool probe = false;                 // also record the domain-probe accuracy per run
  bool save_checkpoints = true;
  TrainConfig train;
  SynthConfig synth = SynthConfig::test_profile();
  std::filesystem::path out_dir;      // empty: nothing is written

  void validate() const;
  /// Model widths for the profile, with input dims taken from the data.
  ModelConfig model_config(std::size_t acoustic_dim, std::size_t visual_dim) const;

  /// Throws ConfigError naming every valid key when `key` is unknown.
  void apply(const std::string& key, const std::string& value);
  static std::vector<std::string> keys();
  KeyValues to_map() const;
};

ExperimentSpec experiment_from_map(const KeyValues& kv);
ExperimentSpec load_experiment_config(const std::filesystem::path& path);

struct ExperimentCorpus {
  std::vector<UtteranceSample> source, target;
};
ExperimentCorpus load_experiment_corpus(const ExperimentSpec& spec);

struct RunRecord {
  TrainMode mode{};
  std::size_t run = 0;
  RunMetrics metrics;
  std::size_t selected_epoch = 0;
  double probe_accuracy = 0.0;  // NaN unless spec.probe
};

struct ModeSummary {
  TrainMode mode{};
  AggregateMetrics metrics;
};

struct ExperimentResult {
  std::vector<RunRecord> runs;
  std::vector<ModeSummary> modes;
};

/// For every mode and run: split the target, train, evaluate on target eval.
/// Runs of different modes share the split, the model initialization and the
/// sampler seed, so modes are compared on identical footing.
ExperimentResult run_experiment(const ExperimentSpec& spec);

/// Reference rows from the original study, printed for orientation only.
struct ReferenceRow {
  std::string setting;
  std::string mode;
  double uar;
};
const std::vector<ReferenceRow>& reference_rows();

std::string summary_table(const ExperimentSpec& spec, const ExperimentResult& result);

}  // namespace emoda
