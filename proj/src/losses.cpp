// SPDX-License-Identifier: Apache-2.0
#include "emoda/losses.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "emoda/errors.hpp"
#include "emoda/kv_config.hpp"
#include "emoda/ops.hpp"

namespace emoda {
namespace {

std::vector<double> one_hot(std::span<const int> labels, std::size_t classes, const char* what) {
  std::vector<double> out(labels.size() * classes, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      throw LabelError(std::string(what) + " label " + std::to_string(labels[i]) + " at position " +
                       std::to_string(i) + " outside [0, " + std::to_string(classes) + ")");
    }
    out[i * classes + static_cast<std::size_t>(labels[i])] = 1.0;
  }
  return out;
}

void require_batch(const char* what, const Tensor& logits, std::size_t batch) {
  if (logits.rank() != 2 || logits.dim(0) != batch || batch == 0) {
    throw DimensionError(std::string(what) + ": logits " + shape_string(logits.shape()) + " vs " +
                         std::to_string(batch) + " labels");
  }
}

}  // namespace

Tensor soft_cross_entropy(const Tensor& logits, std::span<const double> targets, double temperature) {
  if (logits.rank() != 2 || targets.size() != logits.numel()) {
    throw DimensionError("soft_cross_entropy: logits " + shape_string(logits.shape()) + " vs " +
                         std::to_string(targets.size()) + " target entries");
  }
  const Tensor t = Tensor::from_data(logits.shape(), {targets.begin(), targets.end()});
  const double batch = static_cast<double>(logits.dim(0));
  return scale(sum(mul(t, log_softmax(logits, temperature))), -1.0 / batch);
}

Tensor domain_ce_loss(const Tensor& logits, std::span<const int> domain_labels) {
  require_batch("domain_ce_loss", logits, domain_labels.size());
  return soft_cross_entropy(logits, one_hot(domain_labels, logits.dim(1), "domain"), 1.0);
}

Tensor emotion_ce_loss(const Tensor& logits, std::span<const int> labels) {
  require_batch("emotion_ce_loss", logits, labels.size());
  return soft_cross_entropy(logits, one_hot(labels, logits.dim(1), "emotion"), 1.0);
}

Tensor confusion_entropy(const Tensor& logits) {
  if (logits.rank() != 2 || logits.dim(0) == 0) {
    throw DimensionError("confusion_entropy: expected [B×D] logits, got " + shape_string(logits.shape()));
  }
  const double batch = static_cast<double>(logits.dim(0));
  return scale(sum(mul(softmax(logits), log_softmax(logits))), -1.0 / batch);
}

SoftLabelTable build_softlabel_table(const ModelBundle& source_model,
                                     std::span<const UtteranceSample> source_train, double tau) {
  if (source_train.empty()) throw ContractError("build_softlabel_table: empty source training set");
  if (!(tau > 0.0)) throw ParameterError("softlabel temperature must be positive");
  const std::size_t k = source_model.config().num_emotions;

  std::vector<const UtteranceSample*> batch;
  batch.reserve(source_train.size());
  for (const auto& s : source_train) batch.push_back(&s);

  NoGradGuard no_grad;
  Rng unused(0);
  const Tensor probs = softmax(emotion_logits(source_model, encode_batch(source_model, batch, false, unused)), tau);

  SoftLabelTable out;
  out.num_classes = k;
  out.temperature = tau;
  out.table.assign(k * k, 0.0);
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto label = static_cast<std::size_t>(batch[i]->label());
    if (label >= k) throw LabelError("emotion label " + std::to_string(label) + " out of range");
    ++counts[label];
    for (std::size_t j = 0; j < k; ++j) out.table[label * k + j] += probs.data()[i * k + j];
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] == 0) {
      const std::string name = c < kNumEmotions ? std::string(to_string(static_cast<Emotion>(c))) : std::to_string(c);
      throw MissingClassError("softlabel table: no source training sample of class " + name);
    }
    double row_sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) row_sum += (out.table[c * k + j] /= static_cast<double>(counts[c]));
    for (std::size_t j = 0; j < k; ++j) out.table[c * k + j] /= row_sum;
  }
  return out;
}

Tensor softlabel_loss(const Tensor& logits, std::span<const int> target_labels,
                      std::span<const int> domain_labels, const SoftLabelTable& table) {
  require_batch("softlabel_loss", logits, target_labels.size());
  if (domain_labels.size() != target_labels.size()) {
    throw ContractError("softlabel_loss: domain and emotion label counts differ");
  }
  if (logits.dim(1) != table.num_classes) {
    throw DimensionError("softlabel_loss: logits have " + std::to_string(logits.dim(1)) +
                         " classes, table has " + std::to_string(table.num_classes));
  }
  const std::size_t k = table.num_classes;
  std::vector<double> targets(target_labels.size() * k);
  for (std::size_t i = 0; i < target_labels.size(); ++i) {
    if (domain_labels[i] != static_cast<int>(Domain::kTarget)) {
      throw ContractError("softlabel_loss: sample " + std::to_string(i) + " is not from the target domain");
    }
    if (target_labels[i] < 0 || static_cast<std::size_t>(target_labels[i]) >= k) {
      throw LabelError("softlabel_loss: emotion label " + std::to_string(target_labels[i]) + " out of range");
    }
    const auto r = table.row(static_cast<std::size_t>(target_labels[i]));
    std::copy(r.begin(), r.end(), targets.begin() + i * k);
  }
  return soft_cross_entropy(logits, targets, table.temperature);
}

void LossWeights::validate() const {
  if (!(std::isfinite(lambda_conf) && lambda_conf >= 0.0) || !(std::isfinite(lambda_soft) && lambda_soft >= 0.0)) {
    throw ConfigError("loss weights must be finite and nonnegative");
  }
}

Tensor total_loss(const Tensor& emo, const Tensor& conf, const std::optional<Tensor>& soft, const LossWeights& w) {
  w.validate();
  Tensor total = emo;
  if (w.lambda_conf != 0.0) total = sub(total, scale(conf, w.lambda_conf));
  if (soft && w.lambda_soft != 0.0) total = add(total, scale(*soft, w.lambda_soft));
  return total;
}

void write_softlabel_table(std::ostream& out, const SoftLabelTable& t) {
  out << "softlabel v1 K=" << t.num_classes << " tau=" << format_double(t.temperature) << '\n';
  for (std::size_t r = 0; r < t.num_classes; ++r) {
    for (std::size_t c = 0; c < t.num_classes; ++c) out << (c ? " " : "") << format_double(t.table[r * t.num_classes + c]);
    out << '\n';
  }
}

SoftLabelTable read_softlabel_table(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw IngestionError("softlabel table: empty input");
  std::istringstream hs(header);
  std::string magic, version, kfield, taufield;
  hs >> magic >> version >> kfield >> taufield;
  if (magic != "softlabel" || version != "v1" || kfield.rfind("K=", 0) != 0 || taufield.rfind("tau=", 0) != 0) {
    throw IngestionError("softlabel table: bad header '" + header + "'");
  }
  SoftLabelTable t;
  try {
    t.num_classes = static_cast<std::size_t>(kv_int("K", kfield.substr(2)));
    t.temperature = kv_double("tau", taufield.substr(4));
  } catch (const ConfigError& e) {
    throw IngestionError(std::string("softlabel table: ") + e.what());
  }
  t.table.reserve(t.num_classes * t.num_classes);
  for (std::size_t r = 0; r < t.num_classes; ++r) {
    std::string line;
    if (!std::getline(in, line)) throw IngestionError("softlabel table: missing row " + std::to_string(r));
    std::istringstream ls(line);
    std::string tok;
    std::size_t cols = 0;
    while (ls >> tok) {
      try {
        t.table.push_back(kv_double("value", tok));
      } catch (const ConfigError& e) {
        throw IngestionError(std::string("softlabel table: ") + e.what());
      }
      ++cols;
    }
    if (cols != t.num_classes) throw IngestionError("softlabel table: row " + std::to_string(r) + " has wrong width");
  }
  return t;
}

void save_softlabel_table(const std::filesystem::path& path, const SoftLabelTable& t) {
  std::ofstream out(path);
  if (!out) throw IngestionError("cannot write " + path.string());
  write_softlabel_table(out, t);
}

SoftLabelTable load_softlabel_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open " + path.string());
  return read_softlabel_table(in);
}

}  // namespace emoda
