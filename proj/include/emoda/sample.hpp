// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include "emoda/tensor.hpp"

namespace emoda {

enum class Emotion { kAngry = 0, kSad = 1, kHappy = 2, kNeutral = 3 };
enum class Domain { kSource = 0, kTarget = 1 };
enum class Elicitation { kNI, kOI, kTI, kTR, kSynthA, kSynthB };

inline constexpr std::size_t kNumEmotions = 4;
inline constexpr std::size_t kNumDomains = 2;
inline constexpr std::array<std::string_view, kNumEmotions> kEmotionNames = {"Angry", "Sad", "Happy",
                                                                             "Neutral"};

std::string_view to_string(Emotion e);
std::string_view to_string(Domain d);
std::string_view to_string(Elicitation e);
std::optional<Emotion> parse_emotion(std::string_view s);  // name or integer index
std::optional<Domain> parse_domain(std::string_view s);
std::optional<Elicitation> parse_elicitation(std::string_view s);

/// Smallest acoustic length a stored sample may have.
inline constexpr std::size_t kMinAcousticFrames = 23;

/// One utterance: acoustic frames [T_a×acoustic_dim] (filter-bank + energy)
/// and visual embeddings [T_v×visual_dim], both plain (non-grad) tensors.
struct UtteranceSample {
  std::string id;
  Tensor acoustic;
  Tensor visual;
  Emotion emotion = Emotion::kNeutral;
  Domain domain = Domain::kSource;
  Elicitation elicitation = Elicitation::kSynthA;

  int label() const { return static_cast<int>(emotion); }
  int domain_label() const { return static_cast<int>(domain); }
};

/// Throws DataError when the sample breaks its invariants.
void validate_sample(const UtteranceSample& s);

}  // namespace emoda
