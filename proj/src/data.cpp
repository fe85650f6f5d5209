// SPDX-License-Identifier: Apache-2.0
#include "emoda/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "binary_io.hpp"
#include "emoda/errors.hpp"

namespace emoda {

namespace fs = std::filesystem;

namespace {
constexpr char kFeatureMagic[4] = {'E', 'D', 'F', '1'};
constexpr const char* kManifestHeader = "id,domain,emotion,elicitation,acoustic_path,visual_path";

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}
}  // namespace

void save_features(const fs::path& path, const Tensor& matrix) {
  if (matrix.rank() != 2) throw DimensionError("feature matrix must be 2-D, got " + shape_string(matrix.shape()));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError("cannot write feature file " + path.string());
  out.write(kFeatureMagic, 4);
  io::put_u32(out, static_cast<std::uint32_t>(matrix.dim(0)));
  io::put_u32(out, static_cast<std::uint32_t>(matrix.dim(1)));
  for (double v : matrix.data()) io::put_f64(out, v);
}

Tensor load_features(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("missing feature file " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kFeatureMagic, 4) != 0) {
    throw IngestionError("bad magic in feature file " + path.string());
  }
  const std::size_t rows = io::get_u32(in);
  const std::size_t cols = io::get_u32(in);
  std::vector<double> data(rows * cols);
  try {
    for (auto& v : data) v = io::get_f64(in);
  } catch (const IngestionError&) {
    throw IngestionError("feature file " + path.string() + " holds fewer values than its " +
                         std::to_string(rows) + "x" + std::to_string(cols) + " header");
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw IngestionError("feature file " + path.string() + " holds more values than its " +
                         std::to_string(rows) + "x" + std::to_string(cols) + " header");
  }
  return Tensor::from_data({rows, cols}, std::move(data));
}

std::vector<UtteranceSample> load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open manifest " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IngestionError("manifest " + path.string() + " has no header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kManifestHeader) throw IngestionError("manifest header must be '" + std::string(kManifestHeader) + "'");

  const fs::path base = path.parent_path();
  std::vector<UtteranceSample> samples;
  std::size_t rowno = 1;
  while (std::getline(in, line)) {
    ++rowno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_csv(line);
    const auto fail = [&](const std::string& why) {
      const std::string id = f.empty() ? std::string() : " (id '" + f[0] + "')";
      throw IngestionError("manifest " + path.string() + " row " + std::to_string(rowno) + id + ": " + why);
    };
    if (f.size() != 6) fail("expected 6 fields, got " + std::to_string(f.size()));
    UtteranceSample s;
    s.id = f[0];
    const auto d = parse_domain(f[1]);
    const auto e = parse_emotion(f[2]);
    const auto el = parse_elicitation(f[3]);
    if (!d) fail("unknown domain '" + f[1] + "'");
    if (!e) fail("unknown emotion '" + f[2] + "'");
    if (!el) fail("unknown elicitation tag '" + f[3] + "'");
    s.domain = *d;
    s.emotion = *e;
    s.elicitation = *el;
    try {
      const fs::path ap = fs::path(f[4]).is_absolute() ? fs::path(f[4]) : base / f[4];
      const fs::path vp = fs::path(f[5]).is_absolute() ? fs::path(f[5]) : base / f[5];
      s.acoustic = load_features(ap);
      s.visual = load_features(vp);
      validate_sample(s);
    } catch (const Error& err) {
      fail(err.what());
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

void write_corpus(const fs::path& dir, std::span<const UtteranceSample> samples) {
  fs::create_directories(dir / "features");
  std::ofstream manifest(dir / "manifest.csv");
  if (!manifest) throw IngestionError("cannot write manifest in " + dir.string());
  manifest << kManifestHeader << '\n';
  for (const auto& s : samples) {
    const std::string a = "features/" + s.id + ".acoustic.edf";
    const std::string v = "features/" + s.id + ".visual.edf";
    save_features(dir / a, s.acoustic);
    save_features(dir / v, s.visual);
    manifest << s.id << ',' << to_string(s.domain) << ',' << to_string(s.emotion) << ','
             << to_string(s.elicitation) << ',' << a << ',' << v << '\n';
  }
}

std::vector<UtteranceSample> select_by_elicitation(std::span<const UtteranceSample> samples,
                                                   std::span<const Elicitation> tags, Domain relabel_as) {
  std::vector<UtteranceSample> out;
  for (const auto& s : samples) {
    if (std::find(tags.begin(), tags.end(), s.elicitation) == tags.end()) continue;
    out.push_back(s);
    out.back().domain = relabel_as;
  }
  return out;
}

// ---------------------------------------------------------------------------

SynthConfig SynthConfig::test_profile() {
  SynthConfig c;
  c.acoustic_dim = 8;
  c.visual_dim = 16;
  return c;
}

void SynthConfig::validate() const {
  if (acoustic_dim == 0 || visual_dim == 0) throw ConfigError("synth: feature dims must be positive");
  for (std::size_t k = 0; k < kNumEmotions; ++k)
    if (source_counts[k] == 0 || target_counts[k] == 0)
      throw ConfigError("synth: every class needs at least one sample per domain");
  if (!(rho >= 0.0 && rho < 1.0)) throw ConfigError("synth: rho must lie in [0, 1)");
  if (!(noise_std >= 0.0)) throw ConfigError("synth: noise_std must be nonnegative");
  if (acoustic_len_min < kMinAcousticFrames || acoustic_len_max < acoustic_len_min)
    throw ConfigError("synth: acoustic length range must satisfy " + std::to_string(kMinAcousticFrames) +
                      " <= min <= max");
  if (visual_len_min < 1 || visual_len_max < visual_len_min)
    throw ConfigError("synth: visual length range must satisfy 1 <= min <= max");
  if (!(domain_overlap_fraction >= 0.0 && domain_overlap_fraction <= 1.0))
    throw ConfigError("synth: domain_overlap_fraction must lie in [0, 1]");
  if (!(happy_angry_similarity >= 0.0 && happy_angry_similarity <= 1.0))
    throw ConfigError("synth: happy_angry_similarity must lie in [0, 1]");
}

namespace {

std::array<std::size_t, kNumEmotions> parse_counts(const std::string& key, const std::string& value) {
  std::array<std::size_t, kNumEmotions> out{};
  std::istringstream ss(value);
  std::string tok;
  std::size_t i = 0;
  while (std::getline(ss, tok, ',')) {
    if (i >= kNumEmotions) throw ConfigError("key '" + key + "': expected 4 comma-separated counts");
    const auto v = kv_int(key, tok);
    if (v < 0) throw ConfigError("key '" + key + "': counts must be nonnegative");
    out[i++] = static_cast<std::size_t>(v);
  }
  if (i == 1) out.fill(out[0]);
  else if (i != kNumEmotions) throw ConfigError("key '" + key + "': expected 1 or 4 comma-separated counts");
  return out;
}

std::string format_counts(const std::array<std::size_t, kNumEmotions>& c) {
  return std::to_string(c[0]) + "," + std::to_string(c[1]) + "," + std::to_string(c[2]) + "," + std::to_string(c[3]);
}

}  // namespace

bool SynthConfig::apply(const std::string& key, const std::string& value) {
  const auto as_size = [&](std::size_t& dst) {
    const auto v = kv_int(key, value);
    if (v < 0) throw ConfigError("key '" + key + "' must be nonnegative");
    dst = static_cast<std::size_t>(v);
  };
  if (key == "acoustic_dim") as_size(acoustic_dim);
  else if (key == "visual_dim") as_size(visual_dim);
  else if (key == "source_counts") source_counts = parse_counts(key, value);
  else if (key == "target_counts") target_counts = parse_counts(key, value);
  else if (key == "class_separation") class_separation = kv_double(key, value);
  else if (key == "happy_angry_similarity") happy_angry_similarity = kv_double(key, value);
  else if (key == "shift_scale") shift_scale = kv_double(key, value);
  else if (key == "visual_shift_scale") visual_shift_scale = kv_double(key, value);
  else if (key == "visual_separation") visual_separation = kv_double(key, value);
  else if (key == "noise_std") noise_std = kv_double(key, value);
  else if (key == "rho") rho = kv_double(key, value);
  else if (key == "acoustic_len_min") as_size(acoustic_len_min);
  else if (key == "acoustic_len_max") as_size(acoustic_len_max);
  else if (key == "visual_len_min") as_size(visual_len_min);
  else if (key == "visual_len_max") as_size(visual_len_max);
  else if (key == "domain_overlap_fraction") domain_overlap_fraction = kv_double(key, value);
  else if (key == "synth_seed") seed = static_cast<std::uint64_t>(kv_int(key, value));
  else return false;
  return true;
}

std::vector<std::string> SynthConfig::keys() {
  return {"acoustic_dim", "visual_dim", "source_counts", "target_counts", "class_separation",
          "happy_angry_similarity", "shift_scale", "visual_shift_scale", "visual_separation",
          "noise_std", "rho", "acoustic_len_min", "acoustic_len_max", "visual_len_min",
          "visual_len_max", "domain_overlap_fraction", "synth_seed"};
}

KeyValues SynthConfig::to_map() const {
  return {{"acoustic_dim", std::to_string(acoustic_dim)},
          {"visual_dim", std::to_string(visual_dim)},
          {"source_counts", format_counts(source_counts)},
          {"target_counts", format_counts(target_counts)},
          {"class_separation", format_double(class_separation)},
          {"happy_angry_similarity", format_double(happy_angry_similarity)},
          {"shift_scale", format_double(shift_scale)},
          {"visual_shift_scale", format_double(visual_shift_scale)},
          {"visual_separation", format_double(visual_separation)},
          {"noise_std", format_double(noise_std)},
          {"rho", format_double(rho)},
          {"acoustic_len_min", std::to_string(acoustic_len_min)},
          {"acoustic_len_max", std::to_string(acoustic_len_max)},
          {"visual_len_min", std::to_string(visual_len_min)},
          {"visual_len_max", std::to_string(visual_len_max)},
          {"domain_overlap_fraction", format_double(domain_overlap_fraction)},
          {"synth_seed", std::to_string(seed)}};
}

namespace {

struct ModalityMeans {
  std::array<std::vector<double>, kNumEmotions> class_mean;
  std::vector<double> shift;
};

ModalityMeans draw_means(std::size_t dim, double separation, double similarity, double shift_scale, Rng& rng) {
  std::normal_distribution<double> unit(0.0, 1.0);
  ModalityMeans m;
  for (auto& mu : m.class_mean) {
    mu.resize(dim);
    for (auto& v : mu) v = separation * unit(rng);
  }
  const auto angry = static_cast<std::size_t>(Emotion::kAngry);
  const auto happy = static_cast<std::size_t>(Emotion::kHappy);
  for (std::size_t j = 0; j < dim; ++j) {
    m.class_mean[happy][j] =
        m.class_mean[angry][j] + (1.0 - similarity) * (m.class_mean[happy][j] - m.class_mean[angry][j]);
  }
  m.shift.resize(dim);
  for (auto& v : m.shift) v = shift_scale * unit(rng);
  return m;
}

Tensor ar1_sequence(std::size_t length, const std::vector<double>& center, double noise_std, double rho, Rng& rng) {
  const std::size_t dim = center.size();
  std::normal_distribution<double> unit(0.0, 1.0);
  const double innovation = noise_std * std::sqrt(1.0 - rho * rho);
  std::vector<double> data(length * dim);
  std::vector<double> dev(dim);
  for (auto& d : dev) d = noise_std * unit(rng);
  for (std::size_t t = 0; t < length; ++t) {
    if (t > 0)
      for (auto& d : dev) d = rho * d + innovation * unit(rng);
    for (std::size_t j = 0; j < dim; ++j) data[t * dim + j] = center[j] + dev[j];
  }
  return Tensor::from_data({length, dim}, std::move(data));
}

}  // namespace

std::vector<UtteranceSample> generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const ModalityMeans acoustic =
      draw_means(cfg.acoustic_dim, cfg.class_separation, cfg.happy_angry_similarity, cfg.shift_scale, rng);
  const ModalityMeans visual =
      draw_means(cfg.visual_dim, cfg.visual_separation, cfg.happy_angry_similarity, cfg.visual_shift_scale, rng);

  std::uniform_int_distribution<std::size_t> acoustic_len(cfg.acoustic_len_min, cfg.acoustic_len_max);
  std::uniform_int_distribution<std::size_t> visual_len(cfg.visual_len_min, cfg.visual_len_max);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  std::vector<UtteranceSample> out;
  for (const Domain domain : {Domain::kSource, Domain::kTarget}) {
    const auto& counts = domain == Domain::kSource ? cfg.source_counts : cfg.target_counts;
    for (std::size_t k = 0; k < kNumEmotions; ++k) {
      for (std::size_t i = 0; i < counts[k]; ++i) {
        const bool shifted = domain == Domain::kTarget && !(unif(rng) < cfg.domain_overlap_fraction);
        std::vector<double> ca = acoustic.class_mean[k], cv = visual.class_mean[k];
        if (shifted) {
          for (std::size_t j = 0; j < ca.size(); ++j) ca[j] += acoustic.shift[j];
          for (std::size_t j = 0; j < cv.size(); ++j) cv[j] += visual.shift[j];
        }
        UtteranceSample s;
        s.emotion = static_cast<Emotion>(k);
        s.domain = domain;
        s.elicitation = domain == Domain::kSource ? Elicitation::kSynthA : Elicitation::kSynthB;
        char id[64];
        std::snprintf(id, sizeof id, "%s-%s-%04zu", domain == Domain::kSource ? "A" : "B",
                      std::string(to_string(s.emotion)).c_str(), i);
        s.id = id;
        const std::size_t ta = acoustic_len(rng);
        const std::size_t tv = visual_len(rng);
        s.acoustic = ar1_sequence(ta, ca, cfg.noise_std, cfg.rho, rng);
        s.visual = ar1_sequence(tv, cv, cfg.noise_std, cfg.rho, rng);
        out.push_back(std::move(s));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

void SplitSpec::validate() const {
  const double fr[] = {target_train_fraction, target_dev_fraction, target_eval_fraction};
  for (double f : fr)
    if (!(f > 0.0 && f < 1.0)) throw ConfigError("split fractions must lie in (0, 1)");
  if (std::abs(fr[0] + fr[1] + fr[2] - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
  if (run_index >= max_runs()) {
    throw ConfigError("run_index " + std::to_string(run_index) + " exceeds the " + std::to_string(max_runs()) +
                      " disjoint training subsets available");
  }
}

std::size_t SplitSpec::max_runs() const {
  return static_cast<std::size_t>(std::floor(1.0 / target_train_fraction + 1e-9));
}

namespace {

// Hamilton apportionment of `total` across `weights`; ties go to the lower index.
std::vector<std::size_t> apportion(std::size_t total, const std::vector<std::size_t>& weights) {
  const std::size_t w_sum = std::accumulate(weights.begin(), weights.end(), std::size_t{0});
  std::vector<std::size_t> out(weights.size(), 0);
  if (w_sum == 0) return out;
  std::vector<std::pair<std::size_t, std::size_t>> remainders;  // (remainder numerator, index)
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const std::size_t num = total * weights[i];
    out[i] = num / w_sum;
    assigned += out[i];
    remainders.emplace_back(num % w_sum, i);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t j = 0; assigned < total; ++j, ++assigned) ++out[remainders[j].second];
  return out;
}

}  // namespace

TargetSplits make_splits(std::span<const UtteranceSample> target, const SplitSpec& spec) {
  spec.validate();
  std::array<std::vector<std::size_t>, kNumEmotions> by_class;
  for (std::size_t i = 0; i < target.size(); ++i) by_class[static_cast<std::size_t>(target[i].emotion)].push_back(i);

  const std::size_t n = target.size();
  const auto n_train = static_cast<std::size_t>(std::llround(spec.target_train_fraction * static_cast<double>(n)));
  const auto n_dev = static_cast<std::size_t>(std::llround(spec.target_dev_fraction * static_cast<double>(n)));

  std::vector<std::size_t> class_sizes;
  for (const auto& c : by_class) class_sizes.push_back(c.size());
  const auto train_per_class = apportion(n_train, class_sizes);
  std::vector<std::size_t> rest_sizes(kNumEmotions);
  for (std::size_t k = 0; k < kNumEmotions; ++k) rest_sizes[k] = class_sizes[k] - std::min(class_sizes[k], train_per_class[k]);
  const auto dev_per_class = apportion(n_dev, rest_sizes);

  for (std::size_t k = 0; k < kNumEmotions; ++k) {
    const std::string name(to_string(static_cast<Emotion>(k)));
    const std::size_t tr = train_per_class[k], dv = dev_per_class[k];
    // Run r takes the r-th training block; the rest of the class feeds dev and eval.
    if (tr == 0 || dv == 0 || class_sizes[k] < (spec.run_index + 1) * tr || class_sizes[k] < tr + dv + 1) {
      throw SplitError("class " + name + " has " + std::to_string(class_sizes[k]) +
                       " samples, too few for training block " + std::to_string(spec.run_index) +
                       " plus nonempty dev and eval");
    }
  }

  TargetSplits out;
  for (std::size_t k = 0; k < kNumEmotions; ++k) {
    auto perm = by_class[k];
    Rng base(spec.seed * 1000003ull + k);
    std::shuffle(perm.begin(), perm.end(), base);
    const std::size_t tr = train_per_class[k];
    const auto first = perm.begin() + static_cast<std::ptrdiff_t>(spec.run_index * tr);
    std::vector<std::size_t> train(first, first + static_cast<std::ptrdiff_t>(tr));
    std::vector<std::size_t> rest(perm.begin(), first);
    rest.insert(rest.end(), first + static_cast<std::ptrdiff_t>(tr), perm.end());
    Rng per_run(spec.seed * 1000003ull + 7919ull * (spec.run_index + 1) + k);
    std::shuffle(rest.begin(), rest.end(), per_run);
    for (auto i : train) out.train.push_back(target[i]);
    for (std::size_t j = 0; j < rest.size(); ++j)
      (j < dev_per_class[k] ? out.dev : out.eval).push_back(target[rest[j]]);
  }
  return out;
}

// ---------------------------------------------------------------------------

BalancedSampler::Pool BalancedSampler::make_pool(std::span<const UtteranceSample> samples) {
  std::array<std::size_t, kNumEmotions> counts{};
  for (const auto& s : samples) ++counts[static_cast<std::size_t>(s.emotion)];
  std::vector<double> weights;
  weights.reserve(samples.size());
  for (const auto& s : samples) weights.push_back(1.0 / static_cast<double>(counts[static_cast<std::size_t>(s.emotion)]));
  return {samples, std::discrete_distribution<std::size_t>(weights.begin(), weights.end())};
}

BalancedSampler::BalancedSampler(std::span<const UtteranceSample> source, std::span<const UtteranceSample> target,
                                 std::size_t batch_size, std::uint64_t seed)
    : batch_size_(batch_size), rng_(seed) {
  if (batch_size == 0 || batch_size % 2 != 0) {
    throw ConfigError("batch_size must be a positive even number, got " + std::to_string(batch_size));
  }
  if (source.empty() || target.empty()) throw ContractError("balanced sampler needs nonempty source and target pools");
  source_ = make_pool(source);
  target_ = make_pool(target);
  const std::size_t half = batch_size / 2;
  epoch_batches_ = (source.size() + half - 1) / half;
}

BalancedSampler BalancedSampler::source_only(std::span<const UtteranceSample> source, std::size_t batch_size,
                                             std::uint64_t seed) {
  if (batch_size == 0 || batch_size % 2 != 0) {
    throw ConfigError("batch_size must be a positive even number, got " + std::to_string(batch_size));
  }
  if (source.empty()) throw ContractError("sampler needs a nonempty source pool");
  BalancedSampler s;
  s.batch_size_ = batch_size;
  s.rng_.seed(seed);
  s.with_target_ = false;
  s.source_ = make_pool(source);
  const std::size_t half = batch_size / 2;
  s.epoch_batches_ = (source.size() + half - 1) / half;
  return s;
}

Batch BalancedSampler::next() {
  Batch batch;
  batch.reserve(batch_size_);
  const std::size_t from_source = with_target_ ? batch_size_ / 2 : batch_size_;
  for (std::size_t i = 0; i < from_source; ++i) batch.push_back(&source_.samples[source_.pick(rng_)]);
  if (with_target_)
    for (std::size_t i = 0; i < batch_size_ / 2; ++i) batch.push_back(&target_.samples[target_.pick(rng_)]);
  return batch;
}

}  // namespace emoda
