// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <vector>

#include "emoda/model.hpp"
#include "json.hpp"

namespace emoda {

/// Rows of `confusion` are true classes, columns predictions.
struct RunMetrics {
  std::size_t num_classes = 0;
  std::vector<std::size_t> confusion;   // [K×K]
  std::vector<double> per_class_recall; // NaN where a class has no support
  std::vector<bool> supported;
  double uar = 0.0;

  std::size_t count(std::size_t truth, std::size_t pred) const { return confusion[truth * num_classes + pred]; }
};

struct AggregateMetrics {
  double mean_uar = 0.0;
  double std_uar = 0.0;  // sample standard deviation (n-1); 0 for a single run
  std::vector<RunMetrics> runs;
};

/// Index of the largest entry; ties resolve to the lowest index.
std::size_t argmax(std::span<const double> values);

RunMetrics metrics_from_predictions(std::span<const int> predictions, std::span<const int> labels,
                                    std::size_t num_classes);

/// Argmax emotion predictions in evaluation mode.
std::vector<int> predict(const ModelBundle& model, std::span<const UtteranceSample> samples);
RunMetrics evaluate(const ModelBundle& model, std::span<const UtteranceSample> eval_set);

AggregateMetrics aggregate(std::span<const RunMetrics> runs);

nlohmann::json to_json(const RunMetrics& m);

}  // namespace emoda
