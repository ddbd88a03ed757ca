#pragma once

// Adversary simulators: random-edit scrubbing, copy-paste composition and a
// frequency-statistics spoofer.

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "seekmark/primitives.hpp"
#include "seekmark/schemes.hpp"
#include "seekmark/textgen.hpp"

namespace seekmark {

enum class EditKind : std::uint8_t { Substitute = 1, Delete = 2, Insert = 4 };

struct ScrubConfig {
  double edit_rate = 0.2;
  /// Bitwise OR of EditKind values.
  std::uint8_t kinds = static_cast<std::uint8_t>(EditKind::Substitute);
  std::uint64_t rng_seed = 0;
  std::uint32_t vocab_size = 1024;

  bool allows(EditKind k) const noexcept { return (kinds & static_cast<std::uint8_t>(k)) != 0; }
};

/// Applies round(edit_rate * n) edits at distinct positions of the generated
/// region (tokens after prompt_len); each edit draws its kind uniformly from
/// cfg.kinds. Substitutions draw from V minus the original token, insertions
/// from V. The returned sequence keeps the prompt unchanged.
TokenSequence scrub(const TokenSequence& seq, const ScrubConfig& cfg);

struct CopyPasteSpec {
  std::uint32_t m_slots = 1;
  double p_fraction = 0.25;
};

struct CopyPasteResult {
  std::vector<TokenId> tokens;
  /// Half-open spans of the output holding watermarked tokens, in order.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> spans;
};

/// Overwrites M disjoint spans of the host, round(P |host|) tokens in total
/// and as equal as possible, with consecutive pieces of wm. Output length
/// equals the host length. Throws when the split is infeasible.
CopyPasteResult copy_paste(std::span<const TokenId> wm, std::span<const TokenId> host,
                           const CopyPasteSpec& spec, std::uint64_t seed);

struct SpoofEntry {
  std::uint64_t context = 0;
  TokenId token = 0;
  std::uint32_t count_w = 0;
  std::uint32_t count_b = 0;
};

class SpoofModel {
 public:
  SpoofModel() = default;
  SpoofModel(std::uint32_t vocab_size, std::uint32_t attacker_h, double ratio_threshold,
             double pseudo_count);

  std::uint32_t vocab_size() const noexcept { return vocab_size_; }
  std::uint32_t attacker_h() const noexcept { return attacker_h_; }
  double ratio_threshold() const noexcept { return ratio_threshold_; }
  double pseudo_count() const noexcept { return pseudo_count_; }
  /// True when contexts are packed losslessly into 64 bits.
  bool exact_contexts() const noexcept;

  std::uint64_t context_key(std::span<const TokenId> context) const noexcept;
  /// Inverse of context_key; requires exact_contexts().
  std::vector<TokenId> unpack_context(std::uint64_t key) const;

  /// (c_w + a) / (c_b + a) >= ratio_threshold.
  bool estimated_green(const SpoofEntry& e) const noexcept;
  bool estimated_green(std::span<const TokenId> context, TokenId token) const;
  /// Estimated-green tokens of one context (empty for unseen contexts).
  std::vector<TokenId> green_estimate(std::span<const TokenId> context) const;

  /// Sorted by (context, token); only pairs seen in the watermarked corpus.
  const std::vector<SpoofEntry>& entries() const noexcept { return entries_; }
  /// (context, occurrences in the watermarked corpus), sorted by context.
  const std::vector<std::pair<std::uint64_t, std::uint32_t>>& contexts() const noexcept {
    return contexts_;
  }
  std::size_t estimate_count() const noexcept;

 private:
  friend SpoofModel spoof_learn(const std::vector<TokenSequence>&,
                                const std::vector<TokenSequence>&, std::uint32_t,
                                std::uint32_t, double, double);

  std::uint32_t vocab_size_ = 2;
  std::uint32_t attacker_h_ = 1;
  double ratio_threshold_ = 2.0;
  double pseudo_count_ = 1.0;
  unsigned bits_ = 1;
  std::vector<SpoofEntry> entries_;
  std::vector<std::pair<std::uint64_t, std::uint32_t>> contexts_;
};

inline constexpr double kDefaultSpoofRatio = 2.0;
inline constexpr double kDefaultSpoofPseudoCount = 1.0;

/// Counts (context, token) pairs over the generated regions of both corpora.
/// A position counts when attacker_h preceding tokens exist (prompt tokens
/// may serve as context).
SpoofModel spoof_learn(const std::vector<TokenSequence>& wm_corpus,
                       const std::vector<TokenSequence>& base_corpus, std::uint32_t vocab_size,
                       std::uint32_t attacker_h, double ratio_threshold = kDefaultSpoofRatio,
                       double pseudo_count = kDefaultSpoofPseudoCount);

/// Samples from the base model with spoof_delta added to the estimated-green
/// tokens of the current attacker window.
std::vector<TokenId> spoof_generate(const SpoofModel& sm, const ToyModel& base_model,
                                    double spoof_delta, std::span<const TokenId> prompt,
                                    std::uint32_t n_tokens, std::uint64_t seed);

/// Fraction of estimated-green pairs that are green under the victim's true
/// partition. Requires exact contexts and attacker_h >= the victim h; the
/// last h context tokens (plus the token itself under self-seeding) form the
/// victim window. Returns 0 when there are no estimates.
double spoof_precision(const SpoofModel& sm, const SchemeSpec& victim);

/// Fraction of distinct observed contexts seen at least min_count times.
double spoof_coverage(const SpoofModel& sm, std::uint32_t min_count = 10);

}  // namespace seekmark
