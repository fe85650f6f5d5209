// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <set>

#include "emoda/errors.hpp"
#include "emoda/losses.hpp"
#include "emoda/model.hpp"
#include "support.hpp"

using namespace emoda;
using emoda::testing::bitwise_equal;
using emoda::testing::random_tensor;

namespace {

UtteranceSample sample(const ModelConfig& c, std::size_t ta, std::size_t tv, Rng& rng) {
  UtteranceSample s;
  s.id = "s";
  s.acoustic = random_tensor({ta, c.acoustic_dim}, rng);
  s.visual = random_tensor({tv, c.visual_dim}, rng);
  return s;
}

}  // namespace

TEST(ModelConfig, MinimumAcousticLengthFollowsGeometry) {
  EXPECT_EQ(ModelConfig{}.min_acoustic_length(), 18u);
  ModelConfig c;
  c.conv1_kernel = 3;
  c.conv1_stride = 1;
  c.conv2_kernel = 3;
  EXPECT_EQ(c.min_acoustic_length(), 5u);
}

TEST(ModelConfig, MapRoundTripAndValidation) {
  const ModelConfig t = ModelConfig::test_profile();
  EXPECT_EQ(ModelConfig::from_map(t.to_map()), t);
  ModelConfig bad;
  bad.dropout_rate = 1.0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Model, FullSizeForwardShapes) {
  ModelBundle m(ModelConfig{});
  m.init(1);
  Rng rng(2);
  const UtteranceSample s = sample(m.config(), 40, 6, rng);
  const Tensor r = encode(m, s, false, rng);
  EXPECT_EQ(r.shape(), (Shape{128}));
  EXPECT_EQ(emotion_logits(m, r).shape(), (Shape{4}));
  EXPECT_EQ(domain_logits(m, r).shape(), (Shape{2}));
}

TEST(Model, RejectsShortAcousticInput) {
  ModelBundle m(ModelConfig::test_profile());
  m.init(1);
  Rng rng(3);
  const std::size_t need = m.config().min_acoustic_length();
  EXPECT_NO_THROW(encode(m, sample(m.config(), need, 2, rng), false, rng));
  EXPECT_THROW(encode(m, sample(m.config(), need - 1, 2, rng), false, rng), SequenceTooShortError);
}

TEST(Model, ZeroParametersGiveZeroLogits) {
  ModelBundle m(ModelConfig::test_profile());
  Rng rng(4);
  const Tensor r = encode(m, sample(m.config(), 30, 4, rng), false, rng);
  const Tensor logits = emotion_logits(m, r);
  for (double v : logits.data()) EXPECT_EQ(v, 0.0);
}

TEST(Model, BatchEncodingMatchesPerSample) {
  ModelBundle m(ModelConfig::test_profile());
  m.init(5);
  Rng rng(6);
  const UtteranceSample a = sample(m.config(), 25, 3, rng), b = sample(m.config(), 33, 7, rng);
  const UtteranceSample* batch[] = {&a, &b};
  const Tensor reps = encode_batch(m, batch, false, rng);
  const Tensor ra = encode(m, a, false, rng), rb = encode(m, b, false, rng);
  const std::size_t d = m.config().repr_dim;
  EXPECT_TRUE(bitwise_equal(reps.data().subspan(0, d), ra.data()));
  EXPECT_TRUE(bitwise_equal(reps.data().subspan(d, d), rb.data()));
}

TEST(Model, ParameterSetsAreDisjointAndNamed) {
  ModelBundle m(ModelConfig::test_profile());
  const auto named = m.named_params();
  EXPECT_EQ(named.size(), m.enc_params().size() + m.ec_params().size() + m.dc_params().size());
  std::set<std::string> names;
  for (const auto& [n, t] : named) EXPECT_TRUE(names.insert(n).second) << n;
  EXPECT_NE(m.enc_params().find("enc.conv1.weight"), nullptr);
  EXPECT_NE(m.ec_params().find("ec.fc1.weight"), nullptr);
  EXPECT_NE(m.dc_params().find("dc.out.bias"), nullptr);
}

TEST(Model, EmotionLossGradientNeverReachesDomainClassifier) {
  ModelBundle m(ModelConfig::test_profile());
  m.init(7);
  Rng rng(8);
  const UtteranceSample a = sample(m.config(), 25, 3, rng);
  const UtteranceSample* batch[] = {&a};
  const int labels[] = {2};
  emotion_ce_loss(emotion_logits(m, encode_batch(m, batch, true, rng)), labels).backward();
  EXPECT_TRUE(m.enc_params().any_nonzero_grad());
  EXPECT_TRUE(m.ec_params().any_nonzero_grad());
  EXPECT_FALSE(m.dc_params().any_nonzero_grad());
}

TEST(Model, CloneIsIndependent) {
  ModelBundle m(ModelConfig::test_profile());
  m.init(9);
  ModelBundle c = m.clone();
  EXPECT_EQ(c.enc_params().hash(), m.enc_params().hash());
  c.enc_params().params()[0].tensor.mutable_data()[0] += 1.0;
  EXPECT_NE(c.enc_params().hash(), m.enc_params().hash());
}

TEST(Model, SaveLoadRoundTrip) {
  const auto dir = emoda::testing::scratch_dir("model_io");
  ModelBundle m(ModelConfig::test_profile());
  m.init(11);
  save_model(dir, m);
  const ModelBundle back = load_model(dir);
  EXPECT_EQ(back.config(), m.config());
  EXPECT_EQ(back.enc_params().hash(), m.enc_params().hash());
  EXPECT_EQ(back.ec_params().hash(), m.ec_params().hash());
  EXPECT_EQ(back.dc_params().hash(), m.dc_params().hash());
}
