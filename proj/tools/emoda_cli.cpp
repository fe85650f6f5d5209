// SPDX-License-Identifier: Apache-2.0
// Command-line front end. Exit codes: 0 ok, 1 usage/config, 2 data, 3 divergence.

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "emoda/errors.hpp"
#include "emoda/gradcheck.hpp"
#include "emoda/harness.hpp"

using namespace emoda;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kDiverged = 3 };

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "key=value configuration file");
  cmd->add_option("--seed", f.seed, "training seed (overrides the config)");
  cmd->add_option("--out", f.out, "output directory");
}

ExperimentSpec spec_from(const CommonFlags& f) {
  ExperimentSpec spec = f.config.empty() ? ExperimentSpec{} : load_experiment_config(f.config);
  if (f.seed) spec.train.seed = *f.seed;
  if (!f.out.empty()) spec.out_dir = f.out;
  return spec;
}

std::vector<double> parse_grid(const std::string& flag, const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) v.push_back(kv_double(flag, item));
  if (v.empty()) throw ConfigError(flag + " needs at least one value");
  return v;
}

int run_experiment_grid(ExperimentSpec spec, const std::string& lc, const std::string& ls) {
  const auto conf_grid = lc.empty() ? std::vector<double>{spec.train.lambda_conf} : parse_grid("--lambda-conf", lc);
  const auto soft_grid = ls.empty() ? std::vector<double>{spec.train.lambda_soft} : parse_grid("--lambda-soft", ls);
  const bool grid = conf_grid.size() > 1 || soft_grid.size() > 1;
  const auto base_out = spec.out_dir;
  const auto base_name = spec.name;
  for (double c : conf_grid)
    for (double s : soft_grid) {
      ExperimentSpec cell = spec;
      cell.train.lambda_conf = c;
      cell.train.lambda_soft = s;
      if (grid) {
        const std::string tag = "lc" + format_double(c) + "_ls" + format_double(s);
        cell.name = base_name + "_" + tag;
        if (!base_out.empty()) cell.out_dir = base_out / tag;
      }
      const ExperimentResult r = run_experiment(cell);
      std::cout << summary_table(cell, r) << '\n';
    }
  return kOk;
}

int cmd_synth(const CommonFlags& f, const std::string& profile) {
  if (f.out.empty()) throw ConfigError("synth-data requires --out");
  SynthConfig cfg = profile == "test" ? SynthConfig::test_profile() : SynthConfig{};
  if (!f.config.empty())
    for (const auto& [k, v] : read_kv_file(f.config))
      if (!cfg.apply(k, v)) {
        std::string valid;
        for (const auto& key : SynthConfig::keys()) valid += (valid.empty() ? "" : ", ") + key;
        throw ConfigError("unknown config key '" + k + "'; valid keys: " + valid);
      }
  if (f.seed) cfg.seed = *f.seed;
  cfg.validate();
  const auto samples = generate_synthetic(cfg);
  write_corpus(f.out, samples);
  write_kv_file(std::filesystem::path(f.out) / "synth.cfg", cfg.to_map());
  std::cout << "wrote " << samples.size() << " samples to " << f.out << '\n';
  return kOk;
}

int cmd_train(ExperimentSpec spec, std::size_t run) {
  spec.runs = 1;
  spec.validate();
  const ExperimentCorpus corpus = load_experiment_corpus(spec);
  SplitSpec split;
  split.run_index = run;
  split.seed = spec.split_seed;
  const TargetSplits s = make_splits(corpus.target, split);
  ModelBundle model(spec.model_config(corpus.source.front().acoustic.dim(1), corpus.source.front().visual.dim(1)));
  model.init(spec.train.seed);
  TrainResult tr = train(model, corpus.source, s.train, s.dev, spec.train);
  const RunMetrics m = evaluate(tr.best, s.eval);
  if (!spec.out_dir.empty()) {
    std::filesystem::create_directories(spec.out_dir);
    write_kv_file(spec.out_dir / "config.cfg", spec.to_map());
    write_train_log_csv(spec.out_dir / "train_log.csv", tr.log);
    save_model(spec.out_dir / "model", tr.best);
    if (tr.softlabels) save_softlabel_table(spec.out_dir / "softlabel.txt", *tr.softlabels);
    std::ofstream(spec.out_dir / "metrics.json") << to_json(m).dump(2) << '\n';
  }
  std::cout << "mode " << to_string(spec.train.mode) << ", selected epoch " << tr.log.selected_epoch
            << ", target eval UAR " << format_double(m.uar) << '\n';
  return kOk;
}

int cmd_eval(const ExperimentSpec& spec, const std::string& model_dir, std::size_t run) {
  const ModelBundle model = load_model(model_dir);
  const ExperimentCorpus corpus = load_experiment_corpus(spec);
  SplitSpec split;
  split.run_index = run;
  split.seed = spec.split_seed;
  const RunMetrics m = evaluate(model, make_splits(corpus.target, split).eval);
  std::cout << to_json(m).dump(2) << '\n';
  return kOk;
}

int cmd_probe(const ExperimentSpec& spec, const std::string& model_dir) {
  const ModelBundle model = load_model(model_dir);
  const ExperimentCorpus corpus = load_experiment_corpus(spec);
  const double acc = domain_probe_accuracy(model, corpus.source, corpus.target, spec.train.seed);
  std::cout << "domain probe accuracy " << format_double(acc) << '\n';
  return kOk;
}

int cmd_gradcheck(std::uint64_t seed, std::size_t instances) {
  bool ok = true;
  for (const auto& r : run_gradcheck_suite(seed, instances)) {
    std::cout << (r.passed ? "ok    " : "FAIL  ") << r.name << "  max_err=" << r.max_error << " tol=" << r.tolerance
              << " coords=" << r.coordinates << '\n';
    ok = ok && r.passed;
  }
  return ok ? kOk : kData;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial domain adaptation for emotion recognition"};
  app.require_subcommand(1);

  CommonFlags synth_f, train_f, exp_f, eval_f, probe_f;
  std::string profile = "full", mode, model_dir, lambda_conf, lambda_soft;
  std::optional<std::size_t> runs;
  std::size_t run = 0, instances = 10;
  std::uint64_t gc_seed = 0;

  auto* synth = app.add_subcommand("synth-data", "generate a synthetic two-domain corpus");
  add_common(synth, synth_f);
  synth->add_option("--profile", profile, "dimension profile")->check(CLI::IsMember({"full", "test"}));

  auto* train_cmd = app.add_subcommand("train", "train one model on one split");
  add_common(train_cmd, train_f);
  train_cmd->add_option("--mode", mode, "training mode");
  train_cmd->add_option("--run", run, "split index");

  auto* exp = app.add_subcommand("experiment", "modes x runs grid with aggregated metrics");
  add_common(exp, exp_f);
  exp->add_option("--mode", mode, "restrict to one mode");
  exp->add_option("--runs", runs, "number of runs");
  exp->add_option("--lambda-conf", lambda_conf, "comma-separated confusion weights");
  exp->add_option("--lambda-soft", lambda_soft, "comma-separated softlabel weights");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  gc->add_option("--seed", gc_seed, "instance seed");
  gc->add_option("--instances", instances, "random instances per check");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a saved model on a target eval split");
  add_common(eval_cmd, eval_f);
  eval_cmd->add_option("--model", model_dir, "model directory")->required();
  eval_cmd->add_option("--run", run, "split index");

  auto* probe = app.add_subcommand("probe", "domain probe accuracy of a saved encoder");
  add_common(probe, probe_f);
  probe->add_option("--model", model_dir, "model directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_f, profile);
    if (gc->parsed()) return cmd_gradcheck(gc_seed, instances);
    if (train_cmd->parsed()) {
      ExperimentSpec spec = spec_from(train_f);
      if (!mode.empty()) spec.train.apply("mode", mode);
      return cmd_train(spec, run);
    }
    if (exp->parsed()) {
      ExperimentSpec spec = spec_from(exp_f);
      if (!mode.empty()) spec.apply("modes", mode);
      if (runs) spec.apply("runs", std::to_string(*runs));
      return run_experiment_grid(spec, lambda_conf, lambda_soft);
    }
    if (eval_cmd->parsed()) return cmd_eval(spec_from(eval_f), model_dir, run);
    if (probe->parsed()) return cmd_probe(spec_from(probe_f), model_dir);
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDiverged;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const ParameterError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}
