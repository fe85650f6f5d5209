// SPDX-License-Identifier: Apache-2.0
#include "emoda/trainer.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "emoda/errors.hpp"
#include "emoda/metrics.hpp"
#include "emoda/ops.hpp"

namespace emoda {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

constexpr std::string_view kModeNames[] = {"source_only", "source_plus_target", "adversarial",
                                           "adversarial_softlabel"};

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw DivergenceError(std::string("non-finite ") + what + " loss");
}

Tensor select_rows(const Tensor& m, std::span<const std::size_t> rows) {
  std::vector<Tensor> picked;
  picked.reserve(rows.size());
  for (auto r : rows) picked.push_back(row(m, r));
  return stack_rows(picked);
}

struct PhaseGuard {
  const TrainConfig& cfg;
  TrainLog& log;
  const ParamRegistry& a;
  const ParamRegistry& b;
  std::uint64_t ha = 0, hb = 0;

  PhaseGuard(const TrainConfig& c, TrainLog& l, const ParamRegistry& untouched1, const ParamRegistry& untouched2)
      : cfg(c), log(l), a(untouched1), b(untouched2) {
    if (cfg.debug_phase_checks) {
      ha = a.hash();
      hb = b.hash();
    }
  }
  void verify(const char* phase) {
    if (!cfg.debug_phase_checks) return;
    if (a.hash() != ha || b.hash() != hb) {
      throw ContractError(std::string("phase ") + phase + " modified parameters it does not own");
    }
    ++log.phase_checks;
  }
};

}  // namespace

std::string_view to_string(TrainMode m) { return kModeNames[static_cast<std::size_t>(m)]; }

std::optional<TrainMode> parse_train_mode(std::string_view s) {
  for (std::size_t i = 0; i < std::size(kModeNames); ++i)
    if (s == kModeNames[i]) return static_cast<TrainMode>(i);
  return std::nullopt;
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(l2_weight >= 0.0)) throw ConfigError("l2_weight must be nonnegative");
  if (batch_size == 0 || batch_size % 2 != 0) throw ConfigError("batch_size must be a positive even number");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (warmup_epochs >= epochs) throw ConfigError("warmup_epochs must be smaller than epochs");
  if (!(tau > 0.0)) throw ConfigError("tau must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("eps must be positive");
  weights().validate();
}

bool TrainConfig::apply(const std::string& key, const std::string& value) {
  const auto as_size = [&](std::size_t& dst) {
    const auto v = kv_int(key, value);
    if (v < 0) throw ConfigError("key '" + key + "' must be nonnegative");
    dst = static_cast<std::size_t>(v);
  };
  if (key == "lr") lr = kv_double(key, value);
  else if (key == "l2_weight") l2_weight = kv_double(key, value);
  else if (key == "batch_size") as_size(batch_size);
  else if (key == "epochs") as_size(epochs);
  else if (key == "tau") tau = kv_double(key, value);
  else if (key == "lambda_conf") lambda_conf = kv_double(key, value);
  else if (key == "lambda_soft") lambda_soft = kv_double(key, value);
  else if (key == "warmup_epochs") as_size(warmup_epochs);
  else if (key == "beta1") beta1 = kv_double(key, value);
  else if (key == "beta2") beta2 = kv_double(key, value);
  else if (key == "eps") eps = kv_double(key, value);
  else if (key == "seed") seed = static_cast<std::uint64_t>(kv_int(key, value));
  else if (key == "mode") {
    const auto m = parse_train_mode(value);
    if (!m) throw ConfigError("unknown mode '" + value + "'");
    mode = *m;
  } else if (key == "debug_phase_checks") debug_phase_checks = kv_bool(key, value);
  else return false;
  return true;
}

std::vector<std::string> TrainConfig::keys() {
  return {"lr", "l2_weight", "batch_size", "epochs", "tau", "lambda_conf", "lambda_soft", "warmup_epochs",
          "beta1", "beta2", "eps", "seed", "mode", "debug_phase_checks"};
}

KeyValues TrainConfig::to_map() const {
  return {{"lr", format_double(lr)},
          {"l2_weight", format_double(l2_weight)},
          {"batch_size", std::to_string(batch_size)},
          {"epochs", std::to_string(epochs)},
          {"tau", format_double(tau)},
          {"lambda_conf", format_double(lambda_conf)},
          {"lambda_soft", format_double(lambda_soft)},
          {"warmup_epochs", std::to_string(warmup_epochs)},
          {"beta1", format_double(beta1)},
          {"beta2", format_double(beta2)},
          {"eps", format_double(eps)},
          {"seed", std::to_string(seed)},
          {"mode", std::string(to_string(mode))},
          {"debug_phase_checks", debug_phase_checks ? "true" : "false"}};
}

void adam_step(ParamRegistry& params, AdamState& state, const TrainConfig& cfg) {
  auto& ps = params.params();
  if (state.m.size() != ps.size()) {
    state.m.clear();
    state.v.clear();
    for (const auto& p : ps) {
      state.m.emplace_back(p.tensor.numel(), 0.0);
      state.v.emplace_back(p.tensor.numel(), 0.0);
    }
  }
  for (const auto& p : ps)
    for (double g : p.tensor.grad())
      if (!std::isfinite(g)) throw DivergenceError("non-finite gradient in parameter '" + p.name + "'");

  ++state.t;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < ps.size(); ++i) {
    auto& p = ps[i];
    const bool decay = p.kind == ParamKind::kWeight || p.kind == ParamKind::kRecurrent;
    auto theta = p.tensor.mutable_data();
    const auto grad = p.tensor.grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < theta.size(); ++j) {
      double g = grad.empty() ? 0.0 : grad[j];
      if (decay) g += cfg.l2_weight * theta[j];
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
      theta[j] -= cfg.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg.eps);
    }
    p.tensor.zero_grad();
  }
}

void write_train_log_csv(const std::filesystem::path& path, const TrainLog& log) {
  std::ofstream out(path);
  if (!out) throw IngestionError("cannot write " + path.string());
  out << "epoch,l_d,l_emo,l_conf,l_soft,dev_uar\n";
  for (const auto& r : log.epochs) {
    out << r.epoch << ',' << format_double(r.l_d) << ',' << format_double(r.l_emo) << ','
        << format_double(r.l_conf) << ',' << format_double(r.l_soft) << ',' << format_double(r.dev_uar) << '\n';
  }
}

TrainResult train(ModelBundle& model, std::span<const UtteranceSample> source,
                  std::span<const UtteranceSample> target_train, std::span<const UtteranceSample> target_dev,
                  const TrainConfig& cfg) {
  cfg.validate();
  if (target_dev.empty()) throw ConfigError("train: empty target development set");
  const bool with_target = cfg.mode != TrainMode::kSourceOnly;
  const bool adversarial = cfg.mode == TrainMode::kAdversarial || cfg.mode == TrainMode::kAdversarialSoftlabel;
  const bool softlabel = cfg.mode == TrainMode::kAdversarialSoftlabel;
  if (with_target && target_train.empty()) throw ConfigError("train: mode needs labelled target samples");

  BalancedSampler sampler = with_target
                                ? BalancedSampler(source, target_train, cfg.batch_size, derive_seed(cfg.seed, 1))
                                : BalancedSampler::source_only(source, cfg.batch_size, derive_seed(cfg.seed, 1));
  Rng rng_a(derive_seed(cfg.seed, 2));
  Rng rng_b(derive_seed(cfg.seed, 3));
  AdamState adam_dc, adam_enc, adam_ec;

  TrainResult result{model.clone(), {}, std::nullopt};
  double best_uar = -1.0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const bool warm = epoch < cfg.warmup_epochs;
    if (softlabel && epoch == cfg.warmup_epochs) {
      result.softlabels = build_softlabel_table(model, source, cfg.tau);
      result.softlabels->source_model_id = "warmup-epoch-" + std::to_string(epoch);
    }
    LossWeights w{0.0, 0.0};
    if (adversarial && !warm) w = cfg.weights();
    if (!softlabel) w.lambda_soft = 0.0;

    double sum_d = 0.0, sum_emo = 0.0, sum_conf = 0.0, sum_soft = 0.0;
    std::size_t n_soft = 0;
    const std::size_t batches = sampler.epoch_batches();
    for (std::size_t b = 0; b < batches; ++b) {
      const Batch batch = sampler.next();
      std::vector<int> labels, domains;
      std::vector<std::size_t> target_rows;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        labels.push_back(batch[i]->label());
        domains.push_back(with_target ? batch[i]->domain_label() : static_cast<int>(Domain::kSource));
        if (domains.back() == static_cast<int>(Domain::kTarget)) target_rows.push_back(i);
      }

      // Phase A: domain classifier on frozen representations.
      if (with_target) {
        PhaseGuard guard(cfg, result.log, model.enc_params(), model.ec_params());
        Tensor reps;
        {
          NoGradGuard no_grad;
          reps = encode_batch(model, batch, true, rng_a);
        }
        const Tensor l_d = domain_ce_loss(domain_logits(model, reps), domains);
        check_finite(l_d.item(), "domain classifier");
        model.dc_params().zero_grad();
        l_d.backward();
        if (cfg.debug_phase_checks && (model.enc_params().any_nonzero_grad() || model.ec_params().any_nonzero_grad())) {
          throw ContractError("phase A produced encoder or emotion-classifier gradients");
        }
        adam_step(model.dc_params(), adam_dc, cfg);
        guard.verify("A");
        sum_d += l_d.item();
      }

      // Phase B: encoder and emotion classifier.
      {
        PhaseGuard guard(cfg, result.log, model.dc_params(), model.dc_params());
        const Tensor reps = encode_batch(model, batch, true, rng_b);
        const Tensor emo_logits = emotion_logits(model, reps);
        const Tensor l_emo = emotion_ce_loss(emo_logits, labels);
        check_finite(l_emo.item(), "emotion");
        Tensor l_conf = Tensor::scalar(kNaN);
        if (with_target) {
          l_conf = confusion_entropy(domain_logits(model, reps));
          check_finite(l_conf.item(), "confusion");
        }
        std::optional<Tensor> l_soft;
        if (softlabel && !warm && !target_rows.empty()) {
          std::vector<int> t_labels, t_domains;
          for (auto r : target_rows) {
            t_labels.push_back(labels[r]);
            t_domains.push_back(domains[r]);
          }
          l_soft = softlabel_loss(select_rows(emo_logits, target_rows), t_labels, t_domains, *result.softlabels);
          check_finite(l_soft->item(), "softlabel");
          sum_soft += l_soft->item();
          ++n_soft;
        }
        const Tensor total = total_loss(l_emo, l_conf, l_soft, w);
        check_finite(total.item(), "total");
        model.zero_grad();
        total.backward();
        adam_step(model.enc_params(), adam_enc, cfg);
        adam_step(model.ec_params(), adam_ec, cfg);
        model.dc_params().zero_grad();
        guard.verify("B");
        sum_emo += l_emo.item();
        sum_conf += l_conf.item();
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    const double nb = static_cast<double>(batches);
    rec.l_d = with_target ? sum_d / nb : kNaN;
    rec.l_emo = sum_emo / nb;
    rec.l_conf = with_target ? sum_conf / nb : kNaN;
    rec.l_soft = n_soft ? sum_soft / static_cast<double>(n_soft) : kNaN;
    rec.dev_uar = evaluate(model, target_dev).uar;
    result.log.epochs.push_back(rec);
    if (rec.dev_uar > best_uar) {
      best_uar = rec.dev_uar;
      result.log.selected_epoch = epoch;
      result.best = model.clone();
    }
  }
  return result;
}

double domain_probe_accuracy(const ModelBundle& model, std::span<const UtteranceSample> source,
                             std::span<const UtteranceSample> target, std::uint64_t seed) {
  const std::size_t per_domain = std::min(source.size(), target.size());
  if (per_domain < 2) throw ContractError("domain probe needs at least two samples per domain");
  Rng rng(derive_seed(seed, 11));

  // Balanced, shuffled selection; even positions train the probe, odd ones score it.
  std::vector<std::size_t> si(source.size()), ti(target.size());
  std::iota(si.begin(), si.end(), 0);
  std::iota(ti.begin(), ti.end(), 0);
  std::shuffle(si.begin(), si.end(), rng);
  std::shuffle(ti.begin(), ti.end(), rng);
  std::vector<const UtteranceSample*> fit, held;
  std::vector<int> fit_labels, held_labels;
  for (std::size_t i = 0; i < per_domain; ++i) {
    auto& dst = i % 2 == 0 ? fit : held;
    auto& lab = i % 2 == 0 ? fit_labels : held_labels;
    dst.push_back(&source[si[i]]);
    lab.push_back(0);
    dst.push_back(&target[ti[i]]);
    lab.push_back(1);
  }

  Tensor fit_reps, held_reps;
  {
    NoGradGuard no_grad;
    Rng unused(0);
    fit_reps = encode_batch(model, fit, false, unused);
    held_reps = encode_batch(model, held, false, unused);
  }

  const auto& c = model.config();
  ParamRegistry reg;
  const ClassifierLayers head =
      make_classifier_head(reg, "probe", c.repr_dim, c.classifier_hidden1, c.classifier_hidden2, c.num_domains);
  init_params(reg, derive_seed(seed, 12));
  TrainConfig opt;
  opt.lr = 0.01;
  opt.l2_weight = 0.0;
  AdamState state;
  constexpr int kSteps = 300;
  for (int step = 0; step < kSteps; ++step) {
    const Tensor loss = domain_ce_loss(head.forward(fit_reps), fit_labels);
    reg.zero_grad();
    loss.backward();
    adam_step(reg, state, opt);
  }

  NoGradGuard no_grad;
  const Tensor logits = head.forward(held_reps);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < held.size(); ++i)
    if (static_cast<int>(argmax(logits.data().subspan(i * c.num_domains, c.num_domains))) == held_labels[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(held.size());
}

}  // namespace emoda
