// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <set>

#include "emoda/errors.hpp"
#include "emoda/data.hpp"
#include "support.hpp"

using namespace emoda;
using emoda::testing::bitwise_equal;
using emoda::testing::scratch_dir;

namespace {

std::vector<double> frame_mean(const std::vector<UtteranceSample>& s, Domain d, Emotion e) {
  std::vector<double> mean;
  double n = 0;
  for (const auto& u : s) {
    if (u.domain != d || u.emotion != e) continue;
    const std::size_t dim = u.acoustic.dim(1);
    mean.resize(dim, 0.0);
    for (std::size_t t = 0; t < u.acoustic.dim(0); ++t)
      for (std::size_t j = 0; j < dim; ++j) mean[j] += u.acoustic.data()[t * dim + j];
    n += static_cast<double>(u.acoustic.dim(0));
  }
  for (auto& v : mean) v /= n;
  return mean;
}

std::vector<UtteranceSample> labelled_target(std::size_t n) {
  SynthConfig c = SynthConfig::test_profile();
  c.source_counts = {1, 1, 1, 1};
  c.target_counts = {n, n, n, n};
  c.acoustic_len_min = c.acoustic_len_max = 23;
  c.visual_len_min = c.visual_len_max = 1;
  c.seed = 3;
  return emoda::testing::of_domain(generate_synthetic(c), Domain::kTarget);
}

}  // namespace

TEST(Features, RoundTripBitwise) {
  const auto dir = scratch_dir("features");
  Rng rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor m = emoda::testing::random_tensor({1 + static_cast<std::size_t>(trial), 7}, rng, 1e5);
    save_features(dir / "f.edf", m);
    const Tensor back = load_features(dir / "f.edf");
    EXPECT_EQ(back.shape(), m.shape());
    EXPECT_TRUE(bitwise_equal(back.data(), m.data()));
  }
  std::ofstream(dir / "bad.edf") << "EDF1\x02";
  EXPECT_THROW(load_features(dir / "bad.edf"), IngestionError);
  EXPECT_THROW(load_features(dir / "missing.edf"), IngestionError);
}

TEST(Manifest, CorpusRoundTripBitwise) {
  const auto dir = scratch_dir("manifest");
  const auto samples = emoda::testing::small_corpus(3, 5);
  write_corpus(dir, samples);
  const auto back = load_manifest(dir / "manifest.csv");
  ASSERT_EQ(back.size(), samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    EXPECT_EQ(back[i].id, samples[i].id);
    EXPECT_EQ(back[i].emotion, samples[i].emotion);
    EXPECT_EQ(back[i].domain, samples[i].domain);
    EXPECT_EQ(back[i].elicitation, samples[i].elicitation);
    EXPECT_TRUE(bitwise_equal(back[i].acoustic.data(), samples[i].acoustic.data()));
    EXPECT_TRUE(bitwise_equal(back[i].visual.data(), samples[i].visual.data()));
  }
}

TEST(Manifest, ErrorsNameTheRow) {
  const auto dir = scratch_dir("manifest_bad");
  std::ofstream(dir / "manifest.csv") << "id,domain,emotion,elicitation,acoustic_path,visual_path\n"
                                      << "u1,Source,Furious,NI,a.edf,v.edf\n";
  try {
    load_manifest(dir / "manifest.csv");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("u1"), std::string::npos) << e.what();
  }
}

TEST(Manifest, ShortAcousticSequenceIsRejected) {
  const auto dir = scratch_dir("manifest_short");
  std::filesystem::create_directories(dir / "f");
  save_features(dir / "f/a.edf", Tensor::zeros({kMinAcousticFrames - 1, 8}));
  save_features(dir / "f/v.edf", Tensor::zeros({3, 16}));
  std::ofstream(dir / "manifest.csv") << "id,domain,emotion,elicitation,acoustic_path,visual_path\n"
                                      << "u7,Source,Sad,NI,f/a.edf,f/v.edf\n";
  EXPECT_THROW(load_manifest(dir / "manifest.csv"), DataError);
}

TEST(ElicitationSelection, RelabelsDomain) {
  auto all = emoda::testing::small_corpus(2, 1);
  const Elicitation tags[] = {Elicitation::kSynthB};
  const auto picked = select_by_elicitation(all, tags, Domain::kSource);
  EXPECT_EQ(picked.size(), 8u);
  for (const auto& s : picked) EXPECT_EQ(s.domain, Domain::kSource);
}

TEST(Synthetic, CountsDeterminismAndTags) {
  SynthConfig c = SynthConfig::test_profile();
  c.source_counts = {5, 6, 7, 8};
  c.target_counts = {1, 2, 3, 4};
  const auto a = generate_synthetic(c), b = generate_synthetic(c);
  std::map<std::pair<int, int>, std::size_t> counts;
  for (const auto& s : a) ++counts[{s.domain_label(), s.label()}];
  for (int k = 0; k < 4; ++k) {
    EXPECT_EQ((counts[{0, k}]), c.source_counts[k]);
    EXPECT_EQ((counts[{1, k}]), c.target_counts[k]);
  }
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(bitwise_equal(a[i].acoustic.data(), b[i].acoustic.data()));
  for (const auto& s : a) {
    EXPECT_EQ(s.elicitation, s.domain == Domain::kSource ? Elicitation::kSynthA : Elicitation::kSynthB);
    EXPECT_NO_THROW(validate_sample(s));
  }
}

TEST(Synthetic, ZeroShiftKeepsDomainMeansTogether) {
  SynthConfig c = SynthConfig::test_profile();
  c.shift_scale = 0.0;
  c.visual_shift_scale = 0.0;
  c.source_counts = c.target_counts = {200, 200, 200, 200};
  const auto s = generate_synthetic(c);
  // Frames are autocorrelated, so the effective sample count is below the frame count.
  for (Emotion e : {Emotion::kAngry, Emotion::kNeutral}) {
    const auto ms = frame_mean(s, Domain::kSource, e), mt = frame_mean(s, Domain::kTarget, e);
    const double tol = 3.0 * std::sqrt(2.0) * c.noise_std / std::sqrt(200.0);
    for (std::size_t j = 0; j < ms.size(); ++j) EXPECT_LT(std::abs(ms[j] - mt[j]), tol);
  }
}

TEST(Synthetic, HappySitsCloserToAngryThanOtherPairs) {
  SynthConfig c = SynthConfig::test_profile();
  c.happy_angry_similarity = 0.8;
  c.noise_std = 0.0;
  c.source_counts = c.target_counts = {1, 1, 1, 1};
  const auto s = generate_synthetic(c);
  std::array<std::vector<double>, 4> mu;
  for (int k = 0; k < 4; ++k) mu[k] = frame_mean(s, Domain::kSource, static_cast<Emotion>(k));
  auto dist = [&](int a, int b) {
    double d = 0;
    for (std::size_t j = 0; j < mu[a].size(); ++j) d += (mu[a][j] - mu[b][j]) * (mu[a][j] - mu[b][j]);
    return d;
  };
  const double ha = dist(2, 0);
  for (auto [a, b] : {std::pair{0, 1}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}) EXPECT_LT(ha, dist(a, b));
}

// Nearest class mean fit on source frames: accurate on source, hurt by a large shift.
TEST(Synthetic, LargeShiftDegradesNearestMeanClassifier) {
  SynthConfig c = SynthConfig::test_profile();
  c.source_counts = c.target_counts = {60, 60, 60, 60};
  c.class_separation = 1.0;
  c.noise_std = 1.0;
  c.shift_scale = 4.0;
  const auto s = generate_synthetic(c);
  std::array<std::vector<double>, 4> mu;
  for (int k = 0; k < 4; ++k) mu[k] = frame_mean(s, Domain::kSource, static_cast<Emotion>(k));
  auto accuracy = [&](Domain d) {
    std::size_t hit = 0, n = 0;
    for (const auto& u : s) {
      if (u.domain != d) continue;
      const std::size_t dim = u.acoustic.dim(1);
      std::vector<double> m(dim, 0.0);
      for (std::size_t t = 0; t < u.acoustic.dim(0); ++t)
        for (std::size_t j = 0; j < dim; ++j) m[j] += u.acoustic.data()[t * dim + j] / u.acoustic.dim(0);
      int best = 0;
      double best_d = 1e300;
      for (int k = 0; k < 4; ++k) {
        double dd = 0;
        for (std::size_t j = 0; j < dim; ++j) dd += (m[j] - mu[k][j]) * (m[j] - mu[k][j]);
        if (dd < best_d) best_d = dd, best = k;
      }
      hit += best == u.label();
      ++n;
    }
    return static_cast<double>(hit) / n;
  };
  EXPECT_GT(accuracy(Domain::kSource), 0.9);
  EXPECT_LT(accuracy(Domain::kTarget), accuracy(Domain::kSource) - 0.2);
}

TEST(Splits, FiveRunsDisjointExactAndStratified) {
  const auto target = labelled_target(250);
  ASSERT_EQ(target.size(), 1000u);
  std::set<std::string> seen_train;
  for (std::size_t r = 0; r < 5; ++r) {
    SplitSpec spec;
    spec.run_index = r;
    spec.seed = 17;
    const TargetSplits s = make_splits(target, spec);
    EXPECT_EQ(s.train.size(), 100u);
    EXPECT_EQ(s.dev.size(), 400u);
    EXPECT_EQ(s.eval.size(), 500u);
    std::set<std::string> ids;
    for (const auto* part : {&s.train, &s.dev, &s.eval}) {
      std::array<std::size_t, 4> per{};
      for (const auto& u : *part) {
        ++per[u.label()];
        EXPECT_TRUE(ids.insert(u.id).second) << "sample in two splits: " << u.id;
      }
      for (auto c : per) EXPECT_GT(c, 0u);
    }
    for (const auto& u : s.train) EXPECT_TRUE(seen_train.insert(u.id).second) << "train overlap: " << u.id;
  }
}

TEST(Splits, ImbalancedClassesStillPresentEverywhere) {
  auto target = labelled_target(60);
  std::erase_if(target, [n = 0](const UtteranceSample& u) mutable { return u.emotion == Emotion::kHappy && ++n > 20; });
  SplitSpec spec;
  const TargetSplits s = make_splits(target, spec);
  for (const auto* part : {&s.train, &s.dev, &s.eval})
    EXPECT_TRUE(std::any_of(part->begin(), part->end(), [](const auto& u) { return u.emotion == Emotion::kHappy; }));
}

TEST(Splits, InvalidSpecs) {
  const auto target = labelled_target(30);
  SplitSpec bad;
  bad.target_dev_fraction = 0.5;
  EXPECT_THROW(make_splits(target, bad), ConfigError);
  SplitSpec too_many;
  too_many.run_index = 10;
  EXPECT_THROW(make_splits(target, too_many), ConfigError);
  const auto tiny = labelled_target(2);
  EXPECT_THROW(make_splits(tiny, SplitSpec{}), SplitError);
}

TEST(Sampler, EveryBatchIsHalfSourceHalfTarget) {
  const auto all = emoda::testing::small_corpus(10, 2);
  const auto src = emoda::testing::of_domain(all, Domain::kSource);
  const auto tgt = emoda::testing::of_domain(all, Domain::kTarget);
  BalancedSampler sampler(src, tgt, 32, 5);
  EXPECT_EQ(sampler.epoch_batches(), 3u);  // ceil(40 / 16)
  for (int b = 0; b < 10000; ++b) {
    const Batch batch = sampler.next();
    ASSERT_EQ(batch.size(), 32u);
    for (std::size_t i = 0; i < 32; ++i) ASSERT_EQ(batch[i]->domain, i < 16 ? Domain::kSource : Domain::kTarget);
  }
}

TEST(Sampler, ImbalancedClassesDrawnUniformly) {
  // 1372 Happy vs 38 Angry in the source pool.
  std::vector<UtteranceSample> src, tgt;
  for (int i = 0; i < 1372 + 38; ++i) {
    UtteranceSample u;
    u.emotion = i < 1372 ? Emotion::kHappy : Emotion::kAngry;
    u.domain = Domain::kSource;
    src.push_back(u);
  }
  UtteranceSample t;
  t.domain = Domain::kTarget;
  tgt.push_back(t);
  BalancedSampler sampler(src, tgt, 32, 9);
  std::size_t happy = 0, total = 0;
  for (int b = 0; b < 10000; ++b)
    for (const auto* u : sampler.next())
      if (u->domain == Domain::kSource) {
        happy += u->emotion == Emotion::kHappy;
        ++total;
      }
  EXPECT_NEAR(static_cast<double>(happy) / total, 0.5, 0.02);
}

TEST(Sampler, SourceOnlyBatchesAndValidation) {
  const auto src = emoda::testing::of_domain(emoda::testing::small_corpus(4, 3), Domain::kSource);
  BalancedSampler s = BalancedSampler::source_only(src, 8, 1);
  EXPECT_EQ(s.epoch_batches(), 4u);
  for (const auto* u : s.next()) EXPECT_EQ(u->domain, Domain::kSource);
  EXPECT_EQ(s.next().size(), 8u);
  EXPECT_THROW(BalancedSampler(src, src, 7, 1), ConfigError);
}
