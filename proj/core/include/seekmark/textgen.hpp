#pragma once

// Toy autoregressive language model and watermark-aware sampling.
//
// ToyModel is an add-alpha smoothed bigram model. It is trained on corpora
// drawn from a synthetic Markov source whose successor distributions are
// Zipf-shaped over a per-row cyclic shift of a random token order; every
// column of that source sums to one, so its stationary token distribution
// is uniform and unwatermarked text hits any fixed green list at rate gamma.

#include <cstdint>
#include <span>
#include <vector>

#include "seekmark/primitives.hpp"
#include "seekmark/random.hpp"
#include "seekmark/schemes.hpp"

namespace seekmark {

/// Natural-log scores over the vocabulary.
using LogitVector = std::vector<double>;

/// A text: prompt followed by generated tokens.
struct TokenSequence {
  std::vector<TokenId> tokens;
  std::uint32_t prompt_len = 0;

  std::span<const TokenId> generated() const noexcept {
    return std::span<const TokenId>(tokens).subspan(prompt_len);
  }
};

class ToyModel {
 public:
  /// counts is the row-major |V| x |V| bigram count matrix.
  ToyModel(std::uint32_t v_size, std::vector<std::uint32_t> counts, double alpha,
           double temperature, double repetition_penalty = 1.0);

  std::uint32_t vocab_size() const noexcept { return v_size_; }
  double alpha() const noexcept { return alpha_; }
  double temperature() const noexcept { return temperature_; }
  double repetition_penalty() const noexcept { return repetition_penalty_; }
  std::uint32_t count(TokenId prev, TokenId next) const noexcept {
    return counts_[static_cast<std::size_t>(prev) * v_size_ + next];
  }

  /// log P(next | prev) under add-alpha smoothing.
  LogitVector logits(TokenId prev) const;
  /// exp(logits(prev) / temperature), precomputed.
  std::span<const double> row_weights(TokenId prev) const noexcept {
    return {weights_.data() + static_cast<std::size_t>(prev) * v_size_, v_size_};
  }
  /// Sampling distribution softmax(logits / temperature) at one entry.
  double probability(TokenId prev, TokenId next) const noexcept {
    return row_weights(prev)[next] / row_sums_[prev];
  }

  /// Stable little-endian byte image: v_size, alpha, temperature,
  /// repetition penalty, counts.
  std::vector<std::uint8_t> serialize() const;
  static ToyModel deserialize(std::span<const std::uint8_t> bytes);

 private:
  std::uint32_t v_size_;
  std::vector<std::uint32_t> counts_;
  std::vector<std::uint64_t> row_totals_;
  double alpha_;
  double temperature_;
  double repetition_penalty_;
  std::vector<double> weights_;
  std::vector<double> row_sums_;
};

struct SyntheticSourceParams {
  std::uint32_t vocab_size = 1024;
  double zipf_exponent = 1.0;
  std::uint32_t num_sequences = 4000;
  std::uint32_t sequence_length = 256;
  std::uint64_t seed = 1;
};

/// Corpus drawn from the doubly-stochastic Zipf Markov source.
std::vector<std::vector<TokenId>> synthetic_corpus(const SyntheticSourceParams& params);

/// Accumulates bigram counts. Throws on an empty corpus or out-of-range ids.
ToyModel train_toy_model(const std::vector<std::vector<TokenId>>& corpus, std::uint32_t v_size,
                         double alpha, double temperature, double repetition_penalty = 1.0);

struct ModelParams {
  SyntheticSourceParams source;
  double smoothing_alpha = 0.05;
  double temperature = 1.0;
  double repetition_penalty = 1.0;
};

/// synthetic_corpus followed by train_toy_model.
ToyModel build_toy_model(const ModelParams& params);

/// Logit bias: out[t] = l[t] + delta for green t.
LogitVector apply_bias(std::span<const double> logits, const GreenMask& mask, double delta);

/// CTRL-style repetition penalty over the given history: positive logits are
/// divided by the penalty, negative ones multiplied.
void apply_repetition_penalty(LogitVector& logits, std::span<const TokenId> history,
                              double penalty);

/// Draws an index with probability proportional to weights (inverse CDF on
/// one uniform draw).
TokenId sample_categorical(std::span<const double> weights, Rng& rng);

/// Multinomial draw from softmax(logits / temperature), max-subtracted.
TokenId sample_next(std::span<const double> logits, double temperature, Rng& rng);

inline constexpr std::uint32_t kDefaultSelfSeedAttempts = 40;

/// Self-seeding candidate loop: walk candidates in descending logit order and
/// accept the first one that is green when included in its own window. Stops
/// with the top-1 token as soon as a candidate trails it by more than delta,
/// or after max_attempts candidates. context holds the h preceding tokens.
TokenId self_seed_select(std::span<const double> logits, std::span<const TokenId> context,
                         const SchemeSpec& spec,
                         std::uint32_t max_attempts = kDefaultSelfSeedAttempts);

struct GenerationResult {
  std::vector<TokenId> tokens;
  std::uint32_t prompt_len = 0;
  /// Green status of every generated token, recomputed after generation.
  std::vector<std::uint8_t> green_flags;
  std::uint64_t rng_seed = 0;
};

/// Watermarked autoregressive generation (KGW / SEEK loops). Throws
/// "insufficient context" when the prompt is shorter than h.
GenerationResult generate(const ToyModel& model, const SchemeSpec& spec,
                          std::span<const TokenId> prompt, std::uint32_t n_tokens,
                          std::uint64_t rng_seed);

/// Generation without any watermark (no green flags).
std::vector<TokenId> generate_plain(const ToyModel& model, std::span<const TokenId> prompt,
                                    std::uint32_t n_tokens, std::uint64_t rng_seed);

/// Prompt of `length` tokens: a uniform first token followed by plain
/// sampling from the model.
std::vector<TokenId> sample_prompt(const ToyModel& model, std::uint32_t length,
                                   std::uint64_t rng_seed);

}  // namespace seekmark
