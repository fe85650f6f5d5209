// SPDX-License-Identifier: Apache-2.0
#include "emoda/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "emoda/errors.hpp"

namespace emoda {

namespace {

std::uint64_t run_seed(std::uint64_t base, std::uint64_t run, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(base), static_cast<std::uint32_t>(base >> 32),
                    static_cast<std::uint32_t>(run), static_cast<std::uint32_t>(stream)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == ',' || c == '+') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (c != ' ' && c != '\t') {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::string join_tags(const std::vector<Elicitation>& tags) {
  std::string s;
  for (auto t : tags) s += (s.empty() ? "" : "+") + std::string(to_string(t));
  return s;
}

// Re-raise a library error with the experiment position prepended, keeping its category.
[[noreturn]] void rethrow_with_context(const std::string& where) {
  try {
    throw;
  } catch (const DivergenceError& e) {
    throw DivergenceError(where + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(where + ": " + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(where + ": " + e.what());
  } catch (const ContractError& e) {
    throw ContractError(where + ": " + e.what());
  }
}

std::string recall_cell(const RunMetrics& m, std::size_t k) {
  return m.supported[k] ? format_double(m.per_class_recall[k]) : "";
}

}  // namespace

void ExperimentSpec::validate() const {
  if (runs < 1) throw ConfigError("runs must be at least 1");
  if (modes.empty()) throw ConfigError("at least one mode is required");
  if (source_tags.empty()) throw ConfigError("source_tags must not be empty");
  if (std::find(source_tags.begin(), source_tags.end(), target_tag) != source_tags.end())
    throw ConfigError("target_tag " + std::string(to_string(target_tag)) + " also appears in source_tags");
  if (model_profile != "test" && model_profile != "full")
    throw ConfigError("model_profile must be 'test' or 'full'");
  train.validate();
  if (manifest.empty()) synth.validate();
  SplitSpec split;
  split.seed = split_seed;
  if (runs > split.max_runs())
    throw ConfigError("runs=" + std::to_string(runs) + " exceeds the " + std::to_string(split.max_runs()) +
                      " disjoint training subsets the split allows");
}

ModelConfig ExperimentSpec::model_config(std::size_t acoustic_dim, std::size_t visual_dim) const {
  ModelConfig c = model_profile == "test" ? ModelConfig::test_profile() : ModelConfig{};
  c.acoustic_dim = acoustic_dim;
  c.visual_dim = visual_dim;
  c.validate();
  return c;
}

void ExperimentSpec::apply(const std::string& key, const std::string& value) {
  if (key == "name") {
    name = value;
  } else if (key == "source_tags") {
    source_tags.clear();
    for (const auto& t : split_list(value)) {
      const auto e = parse_elicitation(t);
      if (!e) throw ConfigError("unknown elicitation tag '" + t + "'");
      source_tags.push_back(*e);
    }
  } else if (key == "target_tag") {
    const auto e = parse_elicitation(value);
    if (!e) throw ConfigError("unknown elicitation tag '" + value + "'");
    target_tag = *e;
  } else if (key == "modes") {
    modes.clear();
    for (const auto& m : split_list(value)) {
      const auto mode = parse_train_mode(m);
      if (!mode) throw ConfigError("unknown mode '" + m + "'");
      modes.push_back(*mode);
    }
  } else if (key == "runs") {
    const auto v = kv_int(key, value);
    if (v < 1) throw ConfigError("runs must be at least 1");
    runs = static_cast<std::size_t>(v);
  } else if (key == "manifest") {
    manifest = value;
  } else if (key == "model_profile") {
    model_profile = value;
  } else if (key == "split_seed") {
    split_seed = static_cast<std::uint64_t>(kv_int(key, value));
  } else if (key == "probe") {
    probe = kv_bool(key, value);
  } else if (key == "save_checkpoints") {
    save_checkpoints = kv_bool(key, value);
  } else if (!train.apply(key, value) && !synth.apply(key, value)) {
    std::string valid;
    for (const auto& k : keys()) valid += (valid.empty() ? "" : ", ") + k;
    throw ConfigError("unknown config key '" + key + "'; valid keys: " + valid);
  }
}

std::vector<std::string> ExperimentSpec::keys() {
  std::vector<std::string> k = {"name",          "source_tags", "target_tag", "modes",           "runs",
                                "manifest",      "model_profile", "split_seed", "probe", "save_checkpoints"};
  for (auto& s : TrainConfig::keys()) k.push_back(s);
  for (auto& s : SynthConfig::keys()) k.push_back(s);
  return k;
}

KeyValues ExperimentSpec::to_map() const {
  KeyValues kv = train.to_map();
  kv.erase("mode");  // superseded by `modes`
  if (manifest.empty())
    for (auto& [k, v] : synth.to_map()) kv[k] = v;
  std::string mode_list;
  for (auto m : modes) mode_list += (mode_list.empty() ? "" : ",") + std::string(to_string(m));
  kv["name"] = name;
  kv["source_tags"] = join_tags(source_tags);
  kv["target_tag"] = std::string(to_string(target_tag));
  kv["modes"] = mode_list;
  kv["runs"] = std::to_string(runs);
  if (!manifest.empty()) kv["manifest"] = manifest.string();
  kv["model_profile"] = model_profile;
  kv["split_seed"] = std::to_string(split_seed);
  kv["probe"] = probe ? "true" : "false";
  kv["save_checkpoints"] = save_checkpoints ? "true" : "false";
  return kv;
}

ExperimentSpec experiment_from_map(const KeyValues& kv) {
  ExperimentSpec spec;
  // Tags follow the data source unless given explicitly.
  if (kv.contains("manifest")) {
    spec.source_tags = {Elicitation::kNI, Elicitation::kOI};
    spec.target_tag = Elicitation::kTR;
  }
  for (const auto& [k, v] : kv) spec.apply(k, v);
  return spec;
}

ExperimentSpec load_experiment_config(const std::filesystem::path& path) {
  ExperimentSpec spec = experiment_from_map(read_kv_file(path));
  if (!spec.manifest.empty() && spec.manifest.is_relative()) spec.manifest = path.parent_path() / spec.manifest;
  return spec;
}

ExperimentCorpus load_experiment_corpus(const ExperimentSpec& spec) {
  const std::vector<UtteranceSample> all =
      spec.manifest.empty() ? generate_synthetic(spec.synth) : load_manifest(spec.manifest);
  const Elicitation target_tags[] = {spec.target_tag};
  ExperimentCorpus c{select_by_elicitation(all, spec.source_tags, Domain::kSource),
                     select_by_elicitation(all, target_tags, Domain::kTarget)};
  if (c.source.empty()) throw DataError("no samples carry source tags " + join_tags(spec.source_tags));
  if (c.target.empty())
    throw DataError("no samples carry target tag " + std::string(to_string(spec.target_tag)));
  return c;
}

ExperimentResult run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  const ExperimentCorpus corpus = load_experiment_corpus(spec);
  const ModelConfig model_cfg =
      spec.model_config(corpus.source.front().acoustic.dim(1), corpus.source.front().visual.dim(1));

  const auto& out = spec.out_dir;
  if (!out.empty()) {
    std::filesystem::create_directories(out);
    write_kv_file(out / "config.cfg", spec.to_map());
  }

  ExperimentResult result;
  for (const TrainMode mode : spec.modes) {
    std::vector<RunMetrics> per_run;
    for (std::size_t r = 0; r < spec.runs; ++r) {
      const std::string where = spec.name + "/" + std::string(to_string(mode)) + "/run" + std::to_string(r);
      try {
        SplitSpec split;
        split.run_index = r;
        split.seed = spec.split_seed;
        const TargetSplits s = make_splits(corpus.target, split);

        ModelBundle model(model_cfg);
        model.init(run_seed(spec.train.seed, r, 1));
        TrainConfig tc = spec.train;
        tc.mode = mode;
        tc.seed = run_seed(spec.train.seed, r, 2);
        TrainResult tr = train(model, corpus.source, s.train, s.dev, tc);

        RunRecord rec;
        rec.mode = mode;
        rec.run = r;
        rec.metrics = evaluate(tr.best, s.eval);
        rec.selected_epoch = tr.log.selected_epoch;
        rec.probe_accuracy = spec.probe
                                 ? domain_probe_accuracy(tr.best, corpus.source, s.eval, run_seed(spec.train.seed, r, 3))
                                 : std::nan("");

        if (!out.empty()) {
          const auto dir = out / std::string(to_string(mode)) / ("run" + std::to_string(r));
          std::filesystem::create_directories(dir);
          write_train_log_csv(dir / "train_log.csv", tr.log);
          if (spec.save_checkpoints) save_model(dir / "model", tr.best);
          if (tr.softlabels) save_softlabel_table(dir / "softlabel.txt", *tr.softlabels);
          nlohmann::json j = to_json(rec.metrics);
          j["mode"] = to_string(mode);
          j["run"] = r;
          j["selected_epoch"] = rec.selected_epoch;
          if (spec.probe) j["probe_accuracy"] = rec.probe_accuracy;
          std::ofstream(dir / "metrics.json") << j.dump(2) << '\n';
        }
        per_run.push_back(rec.metrics);
        result.runs.push_back(std::move(rec));
      } catch (const Error&) {
        rethrow_with_context(where);
      }
    }
    result.modes.push_back({mode, aggregate(per_run)});
  }

  if (!out.empty()) {
    std::ofstream csv(out / "metrics.csv");
    csv << "experiment,mode,run,uar,recall_angry,recall_sad,recall_happy,recall_neutral\n";
    for (const auto& r : result.runs) {
      csv << spec.name << ',' << to_string(r.mode) << ',' << r.run << ',' << format_double(r.metrics.uar);
      for (std::size_t k = 0; k < kNumEmotions; ++k) csv << ',' << recall_cell(r.metrics, k);
      csv << '\n';
    }
    nlohmann::json agg = nlohmann::json::array();
    for (const auto& m : result.modes)
      agg.push_back({{"experiment", spec.name},
                     {"mode", to_string(m.mode)},
                     {"runs", m.metrics.runs.size()},
                     {"mean_uar", m.metrics.mean_uar},
                     {"std_uar", m.metrics.std_uar}});
    std::ofstream(out / "aggregate.json") << agg.dump(2) << '\n';
    std::ofstream(out / "summary.txt") << summary_table(spec, result);
  }
  return result;
}

const std::vector<ReferenceRow>& reference_rows() {
  static const std::vector<ReferenceRow> rows = {
      {"NI+OI -> TR", "source_only", 0.5005},
      {"NI+OI -> TR", "adversarial_softlabel", 0.6339},
      {"TI+TR -> OI", "source_only", 0.5499},
      {"TI+TR -> OI", "adversarial_softlabel", 0.5920},
  };
  return rows;
}

std::string summary_table(const ExperimentSpec& spec, const ExperimentResult& result) {
  std::ostringstream os;
  os << "experiment " << spec.name << ": " << join_tags(spec.source_tags) << " -> " << to_string(spec.target_tag)
     << ", " << spec.runs << " run(s)\n\n";
  os << std::left << std::setw(24) << "mode" << std::right << std::setw(10) << "mean UAR" << std::setw(10) << "std";
  for (auto n : kEmotionNames) os << std::setw(10) << n;
  os << '\n';
  os << std::fixed << std::setprecision(4);
  for (const auto& m : result.modes) {
    os << std::left << std::setw(24) << to_string(m.mode) << std::right << std::setw(10) << m.metrics.mean_uar
       << std::setw(10) << m.metrics.std_uar;
    for (std::size_t k = 0; k < kNumEmotions; ++k) {
      double total = 0.0;
      std::size_t n = 0;
      for (const auto& r : m.metrics.runs)
        if (r.supported[k]) {
          total += r.per_class_recall[k];
          ++n;
        }
      if (n) os << std::setw(10) << total / static_cast<double>(n);
      else os << std::setw(10) << "-";
    }
    os << '\n';
  }
  if (spec.probe) {
    os << "\ndomain probe accuracy (mean over runs)\n";
    for (const auto& m : result.modes) {
      double total = 0.0;
      std::size_t n = 0;
      for (const auto& r : result.runs)
        if (r.mode == m.mode) {
          total += r.probe_accuracy;
          ++n;
        }
      os << std::left << std::setw(24) << to_string(m.mode) << std::right << std::setw(10)
         << total / static_cast<double>(n) << '\n';
    }
  }
  os << "\nreference values (published results on the licensed corpus, not reproduced)\n";
  for (const auto& r : reference_rows())
    os << std::left << std::setw(14) << r.setting << std::setw(24) << r.mode << std::right << std::setw(10) << r.uar
       << '\n';
  return os.str();
}

}  // namespace emoda
