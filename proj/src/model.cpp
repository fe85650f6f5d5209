// SPDX-License-Identifier: Apache-2.0
#include "emoda/model.hpp"

#include <algorithm>

#include "emoda/errors.hpp"
#include "emoda/kv_config.hpp"

namespace emoda {

ModelConfig ModelConfig::test_profile() {
  ModelConfig c;
  c.acoustic_dim = 8;
  c.visual_dim = 16;
  c.conv1_channels = 16;
  c.conv2_channels = 16;
  c.visual_hidden = 16;
  c.repr_dim = 16;
  return c;
}

void ModelConfig::validate() const {
  const std::pair<const char*, std::size_t> extents[] = {
      {"acoustic_dim", acoustic_dim},     {"visual_dim", visual_dim},
      {"conv1_channels", conv1_channels}, {"conv1_kernel", conv1_kernel},
      {"conv1_stride", conv1_stride},     {"conv2_channels", conv2_channels},
      {"conv2_kernel", conv2_kernel},     {"conv2_stride", conv2_stride},
      {"visual_hidden", visual_hidden},   {"repr_dim", repr_dim},
      {"classifier_hidden1", classifier_hidden1}, {"classifier_hidden2", classifier_hidden2},
      {"num_domains", num_domains}};
  for (const auto& [name, v] : extents)
    if (v == 0) throw ConfigError(std::string("model config: ") + name + " must be positive");
  if (num_emotions < 2) throw ConfigError("model config: num_emotions must be at least 2");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("model config: dropout_rate must lie in [0, 1)");
}

std::size_t ModelConfig::min_acoustic_length() const {
  // conv1 must emit at least conv2_kernel frames.
  return (conv2_kernel - 1) * conv1_stride + conv1_kernel;
}

std::map<std::string, std::string> ModelConfig::to_map() const {
  return {{"acoustic_dim", std::to_string(acoustic_dim)},
          {"visual_dim", std::to_string(visual_dim)},
          {"conv1_channels", std::to_string(conv1_channels)},
          {"conv1_kernel", std::to_string(conv1_kernel)},
          {"conv1_stride", std::to_string(conv1_stride)},
          {"conv2_channels", std::to_string(conv2_channels)},
          {"conv2_kernel", std::to_string(conv2_kernel)},
          {"conv2_stride", std::to_string(conv2_stride)},
          {"visual_hidden", std::to_string(visual_hidden)},
          {"repr_dim", std::to_string(repr_dim)},
          {"classifier_hidden1", std::to_string(classifier_hidden1)},
          {"classifier_hidden2", std::to_string(classifier_hidden2)},
          {"num_emotions", std::to_string(num_emotions)},
          {"num_domains", std::to_string(num_domains)},
          {"dropout_rate", format_double(dropout_rate)},
          {"pooling", pooling == Pooling::kLast ? "last" : "mean"}};
}

ModelConfig ModelConfig::from_map(const std::map<std::string, std::string>& kv) {
  ModelConfig c;
  std::map<std::string, std::size_t*> sizes = {
      {"acoustic_dim", &c.acoustic_dim},     {"visual_dim", &c.visual_dim},
      {"conv1_channels", &c.conv1_channels}, {"conv1_kernel", &c.conv1_kernel},
      {"conv1_stride", &c.conv1_stride},     {"conv2_channels", &c.conv2_channels},
      {"conv2_kernel", &c.conv2_kernel},     {"conv2_stride", &c.conv2_stride},
      {"visual_hidden", &c.visual_hidden},   {"repr_dim", &c.repr_dim},
      {"classifier_hidden1", &c.classifier_hidden1}, {"classifier_hidden2", &c.classifier_hidden2},
      {"num_emotions", &c.num_emotions},     {"num_domains", &c.num_domains}};
  for (const auto& [key, value] : kv) {
    if (auto it = sizes.find(key); it != sizes.end()) {
      const auto v = kv_int(key, value);
      if (v < 0) throw ConfigError("model config: " + key + " must be nonnegative");
      *it->second = static_cast<std::size_t>(v);
    } else if (key == "dropout_rate") {
      c.dropout_rate = kv_double(key, value);
    } else if (key == "pooling") {
      if (value == "last") c.pooling = Pooling::kLast;
      else if (value == "mean") c.pooling = Pooling::kMean;
      else throw ConfigError("model config: pooling must be 'last' or 'mean', got '" + value + "'");
    } else {
      throw ConfigError("model config: unknown key '" + key + "'");
    }
  }
  c.validate();
  return c;
}

ClassifierLayers make_classifier_head(ParamRegistry& reg, const std::string& prefix, std::size_t in,
                                      std::size_t hidden1, std::size_t hidden2, std::size_t classes) {
  ClassifierLayers h;
  h.fc1 = LinearLayer(reg, prefix + ".fc1", in, hidden1);
  h.act1 = PreluLayer(reg, prefix + ".act1.slope");
  h.fc2 = LinearLayer(reg, prefix + ".fc2", hidden1, hidden2);
  h.act2 = PreluLayer(reg, prefix + ".act2.slope");
  h.out = LinearLayer(reg, prefix + ".out", hidden2, classes);
  return h;
}

Tensor ClassifierLayers::forward(const Tensor& x) const {
  return out.forward(act2.forward(fc2.forward(act1.forward(fc1.forward(x)))));
}

namespace {

Tensor pool(const Tensor& states, Pooling mode) {
  return mode == Pooling::kLast ? row(states, states.dim(0) - 1) : mean_rows(states);
}

Tensor head_logits(const ClassifierLayers& head, const Tensor& repr, std::size_t repr_dim) {
  if (repr.rank() == 1) {
    if (repr.dim(0) != repr_dim) {
      throw DimensionError("classifier: expected [" + std::to_string(repr_dim) + "], got " +
                           shape_string(repr.shape()));
    }
    Tensor logits = head.forward(reshape(repr, {1, repr_dim}));
    return reshape(logits, {logits.dim(1)});
  }
  return head.forward(repr);
}

}  // namespace

ModelBundle::ModelBundle(ModelConfig config) : config_(config) {
  config_.validate();
  const auto& c = config_;
  encoder_.conv1 = Conv1dLayer(enc_, "enc.conv1", c.acoustic_dim, c.conv1_channels, c.conv1_kernel, c.conv1_stride);
  encoder_.act1 = PreluLayer(enc_, "enc.conv1.slope");
  encoder_.conv2 = Conv1dLayer(enc_, "enc.conv2", c.conv1_channels, c.conv2_channels, c.conv2_kernel, c.conv2_stride);
  encoder_.act2 = PreluLayer(enc_, "enc.conv2.slope");
  encoder_.acoustic_gru = GruLayer(enc_, "enc.acoustic_gru", c.conv2_channels, c.conv2_channels);
  encoder_.visual_gru = GruLayer(enc_, "enc.visual_gru", c.visual_dim, c.visual_hidden);
  encoder_.merge1 = LinearLayer(enc_, "enc.merge1", c.conv2_channels + c.visual_hidden, c.repr_dim);
  encoder_.merge_act = PreluLayer(enc_, "enc.merge1.slope");
  encoder_.merge2 = LinearLayer(enc_, "enc.merge2", c.repr_dim, c.repr_dim);
  emotion_ = make_classifier_head(ec_, "ec", c.repr_dim, c.classifier_hidden1, c.classifier_hidden2, c.num_emotions);
  domain_ = make_classifier_head(dc_, "dc", c.repr_dim, c.classifier_hidden1, c.classifier_hidden2, c.num_domains);
}

ModelBundle ModelBundle::clone() const {
  ModelBundle copy(config_);
  copy.enc_.copy_values_from(enc_);
  copy.ec_.copy_values_from(ec_);
  copy.dc_.copy_values_from(dc_);
  return copy;
}

void ModelBundle::init(std::uint64_t seed) {
  // Distinct streams per component so each can be reinitialized alone.
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x9e3779b9u};
  std::array<std::uint32_t, 6> words{};
  seq.generate(words.begin(), words.end());
  const auto stream = [&](std::size_t i) {
    return (static_cast<std::uint64_t>(words[2 * i]) << 32) | words[2 * i + 1];
  };
  init_params(enc_, stream(0));
  init_params(ec_, stream(1));
  init_params(dc_, stream(2));
}

std::vector<std::pair<std::string, Tensor>> ModelBundle::named_params() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (const auto* reg : {&enc_, &ec_, &dc_})
    for (const auto& p : reg->params()) out.emplace_back(p.name, p.tensor);
  return out;
}

void ModelBundle::load_params(const std::vector<std::pair<std::string, Tensor>>& params) {
  std::size_t matched = 0;
  for (auto* reg : {&enc_, &ec_, &dc_}) {
    for (auto& p : reg->params()) {
      auto it = std::find_if(params.begin(), params.end(), [&](const auto& kv) { return kv.first == p.name; });
      if (it == params.end()) throw IngestionError("checkpoint lacks parameter '" + p.name + "'");
      if (it->second.shape() != p.tensor.shape()) {
        throw IngestionError("checkpoint parameter '" + p.name + "' has shape " +
                             shape_string(it->second.shape()) + ", model expects " +
                             shape_string(p.tensor.shape()));
      }
      std::copy(it->second.data().begin(), it->second.data().end(), p.tensor.mutable_data().begin());
      ++matched;
    }
  }
  if (matched != params.size()) throw IngestionError("checkpoint holds parameters unknown to this model");
}

void ModelBundle::zero_grad() {
  enc_.zero_grad();
  ec_.zero_grad();
  dc_.zero_grad();
}

Tensor encode_batch(const ModelBundle& model, std::span<const UtteranceSample* const> batch, bool train,
                    Rng& rng) {
  if (batch.empty()) throw ContractError("encode_batch: empty batch");
  const auto& c = model.config();
  const auto& e = model.encoder();
  const Tensor h0_acoustic = Tensor::zeros({c.conv2_channels});
  const Tensor h0_visual = Tensor::zeros({c.visual_hidden});
  std::vector<Tensor> joint;
  joint.reserve(batch.size());
  for (const UtteranceSample* s : batch) {
    if (s->acoustic.rank() != 2 || s->acoustic.dim(1) != c.acoustic_dim) {
      throw DimensionError("sample '" + s->id + "': acoustic features " + shape_string(s->acoustic.shape()) +
                           " do not have " + std::to_string(c.acoustic_dim) + " columns");
    }
    if (s->visual.rank() != 2 || s->visual.dim(1) != c.visual_dim) {
      throw DimensionError("sample '" + s->id + "': visual features " + shape_string(s->visual.shape()) +
                           " do not have " + std::to_string(c.visual_dim) + " columns");
    }
    if (s->acoustic.dim(0) < c.min_acoustic_length()) {
      throw SequenceTooShortError("sample '" + s->id + "': acoustic sequence has " +
                                      std::to_string(s->acoustic.dim(0)) + " frames",
                                  c.min_acoustic_length());
    }
    if (s->visual.dim(0) == 0) throw SequenceTooShortError("sample '" + s->id + "': empty visual sequence", 1);

    Tensor a = e.act1.forward(e.conv1.forward(transpose(s->acoustic)));
    a = e.act2.forward(e.conv2.forward(a));
    const Tensor acoustic_repr = pool(gru_sequence(transpose(a), h0_acoustic, e.acoustic_gru.w), c.pooling);
    const Tensor visual_repr = pool(gru_sequence(s->visual, h0_visual, e.visual_gru.w), c.pooling);
    const Tensor parts[] = {acoustic_repr, visual_repr};
    joint.push_back(concat(parts));
  }
  Tensor x = stack_rows(joint);
  x = e.merge_act.forward(e.merge1.forward(x));
  x = dropout(x, c.dropout_rate, train, rng);
  return e.merge2.forward(x);
}

Tensor encode(const ModelBundle& model, const UtteranceSample& sample, bool train, Rng& rng) {
  const UtteranceSample* one[] = {&sample};
  return row(encode_batch(model, one, train, rng), 0);
}

Tensor emotion_logits(const ModelBundle& model, const Tensor& repr) {
  return head_logits(model.emotion_head(), repr, model.config().repr_dim);
}

Tensor domain_logits(const ModelBundle& model, const Tensor& repr) {
  return head_logits(model.domain_head(), repr, model.config().repr_dim);
}

void save_model(const std::filesystem::path& dir, const ModelBundle& model) {
  std::filesystem::create_directories(dir);
  write_kv_file(dir / "model.cfg", model.config().to_map());
  save_checkpoint(dir / "params.eda", model.named_params());
}

ModelBundle load_model(const std::filesystem::path& dir) {
  ModelBundle model(ModelConfig::from_map(read_kv_file(dir / "model.cfg")));
  model.load_params(load_checkpoint(dir / "params.eda"));
  return model;
}

}  // namespace emoda
