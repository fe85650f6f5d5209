// SPDX-License-Identifier: Apache-2.0
#include "emoda/sample.hpp"

#include <charconv>

#include "emoda/errors.hpp"

namespace emoda {
namespace {

constexpr std::array<std::string_view, 2> kDomainNames = {"Source", "Target"};
constexpr std::array<std::string_view, 6> kElicitationNames = {"NI", "OI", "TI", "TR", "SYNTH_A", "SYNTH_B"};

template <typename Enum, std::size_t N>
std::optional<Enum> parse_named(std::string_view s, const std::array<std::string_view, N>& names) {
  for (std::size_t i = 0; i < N; ++i)
    if (s == names[i]) return static_cast<Enum>(i);
  int v = -1;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec == std::errc() && p == s.data() + s.size() && v >= 0 && static_cast<std::size_t>(v) < N)
    return static_cast<Enum>(v);
  return std::nullopt;
}

}  // namespace

std::string_view to_string(Emotion e) { return kEmotionNames.at(static_cast<std::size_t>(e)); }
std::string_view to_string(Domain d) { return kDomainNames.at(static_cast<std::size_t>(d)); }
std::string_view to_string(Elicitation e) { return kElicitationNames.at(static_cast<std::size_t>(e)); }

std::optional<Emotion> parse_emotion(std::string_view s) { return parse_named<Emotion>(s, kEmotionNames); }
std::optional<Domain> parse_domain(std::string_view s) { return parse_named<Domain>(s, kDomainNames); }
std::optional<Elicitation> parse_elicitation(std::string_view s) {
  return parse_named<Elicitation>(s, kElicitationNames);
}

void validate_sample(const UtteranceSample& s) {
  const auto fail = [&s](const std::string& why) { throw DataError("sample '" + s.id + "': " + why); };
  if (!s.acoustic.defined() || s.acoustic.rank() != 2) fail("acoustic features must be a 2-D matrix");
  if (!s.visual.defined() || s.visual.rank() != 2) fail("visual features must be a 2-D matrix");
  if (s.acoustic.dim(0) < kMinAcousticFrames)
    fail("acoustic sequence has " + std::to_string(s.acoustic.dim(0)) + " frames, need at least " +
         std::to_string(kMinAcousticFrames));
  if (s.visual.dim(0) < 1) fail("visual sequence is empty");
  if (static_cast<std::size_t>(s.emotion) >= kNumEmotions) fail("emotion label out of range");
  if (static_cast<std::size_t>(s.domain) >= kNumDomains) fail("domain label out of range");
}

}  // namespace emoda
