// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "emoda/errors.hpp"
#include "emoda/metrics.hpp"
#include "emoda/trainer.hpp"
#include "support.hpp"

using namespace emoda;
using emoda::testing::of_domain;
using emoda::testing::small_corpus;

namespace {

struct Fixture {
  std::vector<UtteranceSample> source, target_train, target_dev;
};

Fixture fixture(std::size_t per_class, std::uint64_t seed, double shift = 1.5) {
  const auto all = small_corpus(per_class, seed, shift);
  Fixture f;
  f.source = of_domain(all, Domain::kSource);
  const auto target = of_domain(all, Domain::kTarget);
  for (std::size_t i = 0; i < target.size(); ++i) (i % 3 == 0 ? f.target_train : f.target_dev).push_back(target[i]);
  return f;
}

TrainConfig quick(TrainMode mode, std::size_t epochs) {
  TrainConfig c;
  c.mode = mode;
  c.epochs = epochs;
  c.warmup_epochs = 1;
  c.batch_size = 16;
  c.seed = 3;
  return c;
}

}  // namespace

TEST(TrainConfig, ApplyKeysAndValidation) {
  TrainConfig c;
  EXPECT_TRUE(c.apply("lambda_soft", "0.25"));
  EXPECT_TRUE(c.apply("mode", "adversarial"));
  EXPECT_FALSE(c.apply("not_a_key", "1"));
  EXPECT_EQ(c.lambda_soft, 0.25);
  EXPECT_EQ(c.mode, TrainMode::kAdversarial);
  EXPECT_THROW(c.apply("mode", "bogus"), ConfigError);
  for (const auto& [k, v] : c.to_map()) EXPECT_TRUE(TrainConfig{}.apply(k, v)) << k;
  c.tau = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParamRegistry reg;
  Tensor w = reg.add("w", {2}, ParamKind::kWeight);
  Tensor b = reg.add("b", {1}, ParamKind::kBias);
  w.mutable_data()[0] = 1.0;
  b.mutable_data()[0] = 1.0;
  add(sum(mul(w, w)), sum(mul(b, b))).backward();
  TrainConfig cfg;
  cfg.l2_weight = 0.0;
  AdamState st;
  adam_step(reg, st, cfg);
  // Bias-corrected first step is lr·sign(g) for every nonzero gradient.
  EXPECT_NEAR(w.data()[0], 1.0 - cfg.lr, 1e-9);
  EXPECT_EQ(w.data()[1], 0.0);
  EXPECT_NEAR(b.data()[0], 1.0 - cfg.lr, 1e-9);
  EXPECT_FALSE(reg.any_nonzero_grad());
}

TEST(Adam, L2AppliesToWeightsOnly) {
  ParamRegistry reg;
  Tensor w = reg.add("w", {1}, ParamKind::kWeight);
  Tensor b = reg.add("b", {1}, ParamKind::kBias);
  w.mutable_data()[0] = 2.0;
  b.mutable_data()[0] = 2.0;
  w.mutable_grad();
  b.mutable_grad();
  TrainConfig cfg;
  AdamState st;
  adam_step(reg, st, cfg);
  EXPECT_LT(w.data()[0], 2.0);
  EXPECT_EQ(b.data()[0], 2.0);
}

TEST(Adam, NonFiniteGradientDiverges) {
  ParamRegistry reg;
  Tensor w = reg.add("enc.w", {1}, ParamKind::kWeight);
  w.mutable_grad()[0] = std::nan("");
  AdamState st;
  try {
    adam_step(reg, st, TrainConfig{});
    FAIL();
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("enc.w"), std::string::npos);
  }
}

TEST(Train, SourceOnlyLearnsSeparableSource) {
  SynthConfig c = SynthConfig::test_profile();
  c.source_counts = c.target_counts = {30, 30, 30, 30};
  c.shift_scale = c.visual_shift_scale = 0.0;
  c.class_separation = c.visual_separation = 2.0;
  const auto all = generate_synthetic(c);
  const auto src = of_domain(all, Domain::kSource);
  const auto dev = of_domain(all, Domain::kTarget);
  ModelBundle m(ModelConfig::test_profile());
  m.init(1);
  TrainConfig cfg = quick(TrainMode::kSourceOnly, 20);
  const TrainResult r = train(m, src, {}, dev, cfg);
  EXPECT_GT(r.log.epochs[r.log.selected_epoch].dev_uar, 0.95);
  EXPECT_TRUE(std::isnan(r.log.epochs[0].l_d));
}

TEST(Train, PhaseIsolationHoldsEveryBatch) {
  const Fixture f = fixture(8, 4);
  ModelBundle m(ModelConfig::test_profile());
  m.init(2);
  TrainConfig cfg = quick(TrainMode::kAdversarialSoftlabel, 3);
  cfg.debug_phase_checks = true;
  const TrainResult r = train(m, f.source, f.target_train, f.target_dev, cfg);
  const std::size_t batches = (f.source.size() + 7) / 8;
  EXPECT_EQ(r.log.phase_checks, 2 * batches * cfg.epochs);
}

TEST(Train, BestEpochIsSelectedAndReturned) {
  const Fixture f = fixture(6, 5);
  ModelBundle m(ModelConfig::test_profile());
  m.init(3);
  const TrainResult r = train(m, f.source, f.target_train, f.target_dev, quick(TrainMode::kAdversarial, 4));
  ASSERT_EQ(r.log.epochs.size(), 4u);
  double best = -1;
  std::size_t at = 0;
  for (const auto& e : r.log.epochs)
    if (e.dev_uar > best) best = e.dev_uar, at = e.epoch;
  EXPECT_EQ(r.log.selected_epoch, at);
  EXPECT_EQ(evaluate(r.best, f.target_dev).uar, best);
}

TEST(Train, SoftlabelTableFrozenAfterWarmup) {
  const Fixture f = fixture(6, 6);
  ModelBundle m(ModelConfig::test_profile());
  m.init(4);
  TrainConfig cfg = quick(TrainMode::kAdversarialSoftlabel, 3);
  cfg.warmup_epochs = 2;
  const TrainResult r = train(m, f.source, f.target_train, f.target_dev, cfg);
  ASSERT_TRUE(r.softlabels.has_value());
  EXPECT_EQ(r.softlabels->temperature, cfg.tau);
  EXPECT_TRUE(std::isnan(r.log.epochs[1].l_soft));
  EXPECT_FALSE(std::isnan(r.log.epochs[2].l_soft));
  ModelBundle m2(ModelConfig::test_profile());
  m2.init(4);
  TrainConfig adv = cfg;
  adv.mode = TrainMode::kAdversarial;
  EXPECT_FALSE(train(m2, f.source, f.target_train, f.target_dev, adv).softlabels.has_value());
}

// With both weights zero, adversarial training must follow source_plus_target
// exactly: phase A still runs but never feeds back into the encoder.
TEST(Train, ZeroWeightAdversarialEqualsSourcePlusTarget) {
  const Fixture f = fixture(6, 7);
  ModelBundle a(ModelConfig::test_profile()), b(ModelConfig::test_profile());
  a.init(5);
  b.init(5);
  TrainConfig ca = quick(TrainMode::kAdversarial, 3);
  ca.lambda_conf = 0.0;
  ca.lambda_soft = 0.0;
  TrainConfig cb = quick(TrainMode::kSourcePlusTarget, 3);
  const TrainResult ra = train(a, f.source, f.target_train, f.target_dev, ca);
  const TrainResult rb = train(b, f.source, f.target_train, f.target_dev, cb);
  EXPECT_EQ(a.enc_params().hash(), b.enc_params().hash());
  EXPECT_EQ(a.ec_params().hash(), b.ec_params().hash());
  for (std::size_t e = 0; e < 3; ++e) EXPECT_EQ(ra.log.epochs[e].l_emo, rb.log.epochs[e].l_emo);
}

TEST(Train, DeterministicGivenSeed) {
  const Fixture f = fixture(5, 8);
  auto run = [&] {
    ModelBundle m(ModelConfig::test_profile());
    m.init(6);
    return train(m, f.source, f.target_train, f.target_dev, quick(TrainMode::kAdversarialSoftlabel, 3));
  };
  const TrainResult a = run(), b = run();
  EXPECT_EQ(a.best.enc_params().hash(), b.best.enc_params().hash());
  EXPECT_EQ(a.best.dc_params().hash(), b.best.dc_params().hash());
  EXPECT_EQ(a.log.epochs.back().l_conf, b.log.epochs.back().l_conf);
}

TEST(Train, RejectsEmptyDevAndMissingTarget) {
  const Fixture f = fixture(4, 9);
  ModelBundle m(ModelConfig::test_profile());
  m.init(1);
  EXPECT_THROW(train(m, f.source, f.target_train, {}, quick(TrainMode::kAdversarial, 1)), ConfigError);
  EXPECT_THROW(train(m, f.source, {}, f.target_dev, quick(TrainMode::kAdversarial, 1)), ConfigError);
}

TEST(TrainLog, CsvHasHeaderAndOneRowPerEpoch) {
  TrainLog log;
  log.epochs.push_back({0, 0.5, 1.0, 0.6, std::nan(""), 0.4});
  log.epochs.push_back({1, 0.4, 0.9, 0.65, 0.3, 0.5});
  const auto dir = emoda::testing::scratch_dir("trainlog");
  write_train_log_csv(dir / "log.csv", log);
  std::ifstream in(dir / "log.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "epoch,l_d,l_emo,l_conf,l_soft,dev_uar");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 2);
}

TEST(DomainProbe, DetectsShiftAndChanceWithoutIt) {
  ModelBundle m(ModelConfig::test_profile());
  m.init(10);
  const auto shifted = small_corpus(25, 11, 3.0);
  EXPECT_GT(domain_probe_accuracy(m, of_domain(shifted, Domain::kSource), of_domain(shifted, Domain::kTarget), 1),
            0.8);
  // 600 held-out samples keep the sampling spread of a chance probe near 0.02.
  const auto same = small_corpus(150, 12, 0.0);
  EXPECT_NEAR(domain_probe_accuracy(m, of_domain(same, Domain::kSource), of_domain(same, Domain::kTarget), 1), 0.5,
              0.05);
}
