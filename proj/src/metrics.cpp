// SPDX-License-Identifier: Apache-2.0
#include "emoda/metrics.hpp"

#include <cmath>
#include <limits>

#include "emoda/errors.hpp"

namespace emoda {

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

RunMetrics metrics_from_predictions(std::span<const int> predictions, std::span<const int> labels,
                                    std::size_t num_classes) {
  if (predictions.size() != labels.size()) throw ContractError("prediction and label counts differ");
  if (labels.empty()) throw ContractError("cannot score an empty evaluation set");
  RunMetrics m;
  m.num_classes = num_classes;
  m.confusion.assign(num_classes * num_classes, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes ||
        predictions[i] < 0 || static_cast<std::size_t>(predictions[i]) >= num_classes) {
      throw LabelError("label or prediction out of range at position " + std::to_string(i));
    }
    ++m.confusion[static_cast<std::size_t>(labels[i]) * num_classes + static_cast<std::size_t>(predictions[i])];
  }
  double recall_sum = 0.0;
  std::size_t supported = 0;
  for (std::size_t k = 0; k < num_classes; ++k) {
    std::size_t row_sum = 0;
    for (std::size_t j = 0; j < num_classes; ++j) row_sum += m.count(k, j);
    m.supported.push_back(row_sum > 0);
    if (row_sum == 0) {
      m.per_class_recall.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    const double r = static_cast<double>(m.count(k, k)) / static_cast<double>(row_sum);
    m.per_class_recall.push_back(r);
    recall_sum += r;
    ++supported;
  }
  m.uar = recall_sum / static_cast<double>(supported);
  return m;
}

std::vector<int> predict(const ModelBundle& model, std::span<const UtteranceSample> samples) {
  std::vector<int> out;
  out.reserve(samples.size());
  NoGradGuard no_grad;
  Rng unused(0);
  constexpr std::size_t kChunk = 64;
  for (std::size_t start = 0; start < samples.size(); start += kChunk) {
    std::vector<const UtteranceSample*> batch;
    for (std::size_t i = start; i < std::min(samples.size(), start + kChunk); ++i) batch.push_back(&samples[i]);
    const Tensor logits = emotion_logits(model, encode_batch(model, batch, false, unused));
    const std::size_t k = logits.dim(1);
    for (std::size_t i = 0; i < batch.size(); ++i)
      out.push_back(static_cast<int>(argmax(logits.data().subspan(i * k, k))));
  }
  return out;
}

RunMetrics evaluate(const ModelBundle& model, std::span<const UtteranceSample> eval_set) {
  if (eval_set.empty()) throw ContractError("evaluate: empty evaluation set");
  std::vector<int> labels;
  labels.reserve(eval_set.size());
  for (const auto& s : eval_set) labels.push_back(s.label());
  return metrics_from_predictions(predict(model, eval_set), labels, model.config().num_emotions);
}

AggregateMetrics aggregate(std::span<const RunMetrics> runs) {
  if (runs.empty()) throw ContractError("aggregate: no runs");
  AggregateMetrics a;
  a.runs.assign(runs.begin(), runs.end());
  const double n = static_cast<double>(runs.size());
  double sum = 0.0;
  for (const auto& r : runs) sum += r.uar;
  a.mean_uar = sum / n;
  if (runs.size() > 1) {
    double ss = 0.0;
    for (const auto& r : runs) ss += (r.uar - a.mean_uar) * (r.uar - a.mean_uar);
    a.std_uar = std::sqrt(ss / (n - 1.0));
  }
  return a;
}

nlohmann::json to_json(const RunMetrics& m) {
  nlohmann::json j;
  j["uar"] = m.uar;
  nlohmann::json recall = nlohmann::json::object();
  nlohmann::json unsupported = nlohmann::json::array();
  for (std::size_t k = 0; k < m.num_classes; ++k) {
    const std::string name = k < kNumEmotions ? std::string(kEmotionNames[k]) : std::to_string(k);
    if (m.supported[k]) recall[name] = m.per_class_recall[k];
    else {
      recall[name] = nullptr;
      unsupported.push_back(name);
    }
  }
  j["per_class_recall"] = recall;
  j["classes_without_support"] = unsupported;
  nlohmann::json conf = nlohmann::json::array();
  for (std::size_t r = 0; r < m.num_classes; ++r) {
    nlohmann::json rowj = nlohmann::json::array();
    for (std::size_t c = 0; c < m.num_classes; ++c) rowj.push_back(m.count(r, c));
    conf.push_back(rowj);
  }
  j["confusion"] = conf;
  return j;
}

}  // namespace emoda
