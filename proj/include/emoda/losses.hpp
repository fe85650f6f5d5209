// SPDX-License-Identifier: Apache-2.0
#pragma once

// Training objectives. Every batch loss is a MEAN over the batch.
//
//   L_D    = -log P(d | enc(x))                      domain classifier
//   L_conf = -sum_d P(d|enc(x)) log P(d|enc(x))       domain confusion (entropy)
//   L_emo  = -log P_y                                 emotion classifier
//   L_soft = -sum_i l_i^(y) log P_i(tau)              softlabel alignment
//   L_total = L_emo - lambda_conf * L_conf + lambda_soft * L_soft

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "emoda/model.hpp"
#include "emoda/sample.hpp"

namespace emoda {

Tensor domain_ce_loss(const Tensor& domain_logits, std::span<const int> domain_labels);
Tensor confusion_entropy(const Tensor& domain_logits);
Tensor emotion_ce_loss(const Tensor& emotion_logits, std::span<const int> labels);

/// Mean over the batch of -sum_i targets[row][i] * log softmax(logits/tau)_i.
Tensor soft_cross_entropy(const Tensor& logits, std::span<const double> targets, double temperature);

/// Row k is the mean temperature-softened emotion posterior of the source
/// training samples labelled k.
struct SoftLabelTable {
  std::size_t num_classes = 0;
  std::vector<double> table;  // [K×K], row-stochastic
  double temperature = 1.0;
  std::string source_model_id;

  std::span<const double> row(std::size_t k) const { return {table.data() + k * num_classes, num_classes}; }
  bool operator==(const SoftLabelTable& o) const {
    return num_classes == o.num_classes && table == o.table && temperature == o.temperature;
  }
};

SoftLabelTable build_softlabel_table(const ModelBundle& source_model,
                                     std::span<const UtteranceSample> source_train, double tau);

/// All samples must come from the target domain.
Tensor softlabel_loss(const Tensor& emotion_logits, std::span<const int> target_labels,
                      std::span<const int> domain_labels, const SoftLabelTable& table);

struct LossWeights {
  double lambda_conf = 1.0;
  double lambda_soft = 0.1;

  void validate() const;
};

/// Terms with zero weight are left out of the graph entirely.
Tensor total_loss(const Tensor& emo, const Tensor& conf, const std::optional<Tensor>& soft,
                  const LossWeights& w);

// Text format: "softlabel v1 K=<K> tau=<tau>" then K lines of K values.
void write_softlabel_table(std::ostream& out, const SoftLabelTable& t);
SoftLabelTable read_softlabel_table(std::istream& in);
void save_softlabel_table(const std::filesystem::path& path, const SoftLabelTable& t);
SoftLabelTable load_softlabel_table(const std::filesystem::path& path);

}  // namespace emoda
