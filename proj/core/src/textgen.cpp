#include "seekmark/textgen.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>

#include "seekmark/error.hpp"

namespace seekmark {

namespace {

void validate_model_params(std::uint32_t v_size, double alpha, double temperature,
                           double penalty) {
  if (v_size < 2) throw ValidationError("model.vocab_size: must be at least 2");
  if (!(alpha > 0.0) || !std::isfinite(alpha))
    throw ValidationError("model.smoothing_alpha: must be positive");
  if (!(temperature > 0.0) || !std::isfinite(temperature))
    throw ValidationError("model.temperature: must be positive");
  if (!(penalty > 0.0) || !std::isfinite(penalty))
    throw ValidationError("model.repetition_penalty: must be positive");
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint64_t u64() { return read(8); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(read(4)); }
  double f64() { return std::bit_cast<double>(u64()); }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::uint64_t read(std::size_t n) {
    if (bytes_.size() - pos_ < n) throw ValidationError("model bytes truncated");
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < n; ++i) v |= std::uint64_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += n;
    return v;
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

ToyModel::ToyModel(std::uint32_t v_size, std::vector<std::uint32_t> counts, double alpha,
                   double temperature, double repetition_penalty)
    : v_size_(v_size),
      counts_(std::move(counts)),
      alpha_(alpha),
      temperature_(temperature),
      repetition_penalty_(repetition_penalty) {
  validate_model_params(v_size, alpha, temperature, repetition_penalty);
  const std::size_t n = static_cast<std::size_t>(v_size) * v_size;
  if (counts_.size() != n) throw ValidationError("model: count matrix has wrong size");
  row_totals_.assign(v_size, 0);
  weights_.resize(n);
  row_sums_.assign(v_size, 0.0);
  for (std::uint32_t a = 0; a < v_size; ++a) {
    const std::uint32_t* row = counts_.data() + static_cast<std::size_t>(a) * v_size;
    row_totals_[a] = std::accumulate(row, row + v_size, std::uint64_t{0});
    const double denom = static_cast<double>(row_totals_[a]) + alpha_ * v_size;
    double* w = weights_.data() + static_cast<std::size_t>(a) * v_size;
    double sum = 0.0;
    for (std::uint32_t b = 0; b < v_size; ++b) {
      w[b] = std::exp(std::log((row[b] + alpha_) / denom) / temperature_);
      sum += w[b];
    }
    row_sums_[a] = sum;
  }
}

LogitVector ToyModel::logits(TokenId prev) const {
  if (prev >= v_size_) throw ValidationError("token id outside vocabulary");
  LogitVector out(v_size_);
  const std::uint32_t* row = counts_.data() + static_cast<std::size_t>(prev) * v_size_;
  const double denom = static_cast<double>(row_totals_[prev]) + alpha_ * v_size_;
  for (std::uint32_t b = 0; b < v_size_; ++b) out[b] = std::log((row[b] + alpha_) / denom);
  return out;
}

std::vector<std::uint8_t> ToyModel::serialize() const {
  std::vector<std::uint8_t> out;
  out.reserve(36 + counts_.size() * 4);
  put_u32(out, v_size_);
  put_u64(out, std::bit_cast<std::uint64_t>(alpha_));
  put_u64(out, std::bit_cast<std::uint64_t>(temperature_));
  put_u64(out, std::bit_cast<std::uint64_t>(repetition_penalty_));
  for (std::uint32_t c : counts_) put_u32(out, c);
  return out;
}

ToyModel ToyModel::deserialize(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes);
  const std::uint32_t v = in.u32();
  const double alpha = in.f64();
  const double temperature = in.f64();
  const double penalty = in.f64();
  validate_model_params(v, alpha, temperature, penalty);
  const std::size_t n = static_cast<std::size_t>(v) * v;
  if ((bytes.size() - 28) / 4 != n) throw ValidationError("model bytes have wrong length");
  std::vector<std::uint32_t> counts(n);
  for (auto& c : counts) c = in.u32();
  if (!in.done()) throw ValidationError("model bytes have trailing data");
  return ToyModel(v, std::move(counts), alpha, temperature, penalty);
}

std::vector<std::vector<TokenId>> synthetic_corpus(const SyntheticSourceParams& p) {
  if (p.vocab_size < 2) throw ValidationError("source.vocab_size: must be at least 2");
  if (!(p.zipf_exponent >= 0.0)) throw ValidationError("source.zipf_exponent: must be >= 0");
  if (p.sequence_length < 2) throw ValidationError("source.sequence_length: must be at least 2");
  const std::uint32_t v = p.vocab_size;
  Rng rng(p.seed);

  std::vector<double> cdf(v);
  double total = 0.0;
  for (std::uint32_t r = 0; r < v; ++r) {
    total += std::pow(static_cast<double>(r + 1), -p.zipf_exponent);
    cdf[r] = total;
  }
  // token_at[pos] orders the vocabulary; offset[a] is a permutation, which
  // makes every column of the transition matrix sum to one.
  std::vector<TokenId> token_at(v);
  std::vector<std::uint32_t> offset(v);
  std::iota(token_at.begin(), token_at.end(), 0u);
  std::iota(offset.begin(), offset.end(), 0u);
  std::shuffle(token_at.begin(), token_at.end(), rng);
  std::shuffle(offset.begin(), offset.end(), rng);

  std::vector<std::vector<TokenId>> corpus(p.num_sequences);
  for (auto& seq : corpus) {
    seq.resize(p.sequence_length);
    seq[0] = static_cast<TokenId>(rng.below(v));
    for (std::uint32_t k = 1; k < p.sequence_length; ++k) {
      const double u = rng.uniform() * total;
      auto r = static_cast<std::uint32_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
      r = std::min(r, v - 1);
      seq[k] = token_at[(r + v - offset[seq[k - 1]]) % v];
    }
  }
  return corpus;
}

ToyModel train_toy_model(const std::vector<std::vector<TokenId>>& corpus, std::uint32_t v_size,
                         double alpha, double temperature, double repetition_penalty) {
  if (corpus.empty()) throw ValidationError("empty corpus");
  validate_model_params(v_size, alpha, temperature, repetition_penalty);
  std::vector<std::uint32_t> counts(static_cast<std::size_t>(v_size) * v_size, 0);
  for (const auto& seq : corpus) {
    for (TokenId t : seq)
      if (t >= v_size) throw ValidationError("corpus token id outside vocabulary");
    for (std::size_t k = 1; k < seq.size(); ++k)
      ++counts[static_cast<std::size_t>(seq[k - 1]) * v_size + seq[k]];
  }
  return ToyModel(v_size, std::move(counts), alpha, temperature, repetition_penalty);
}

ToyModel build_toy_model(const ModelParams& params) {
  return train_toy_model(synthetic_corpus(params.source), params.source.vocab_size,
                         params.smoothing_alpha, params.temperature, params.repetition_penalty);
}

LogitVector apply_bias(std::span<const double> logits, const GreenMask& mask, double delta) {
  if (logits.size() != mask.size()) throw ValidationError("logit and mask lengths differ");
  LogitVector out(logits.begin(), logits.end());
  for (std::size_t t = 0; t < out.size(); ++t)
    if (mask.contains(static_cast<TokenId>(t))) out[t] += delta;
  return out;
}

void apply_repetition_penalty(LogitVector& logits, std::span<const TokenId> history,
                              double penalty) {
  if (penalty == 1.0) return;
  std::vector<std::uint8_t> seen(logits.size(), 0);
  for (TokenId t : history) {
    if (t >= logits.size() || seen[t]) continue;
    seen[t] = 1;
    logits[t] = logits[t] > 0.0 ? logits[t] / penalty : logits[t] * penalty;
  }
}

TokenId sample_categorical(std::span<const double> weights, Rng& rng) {
  double total = 0.0;
  for (double w : weights) total += w;
  const double u = rng.uniform() * total;
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    acc += weights[i];
    last = i;
    if (u < acc) return static_cast<TokenId>(i);
  }
  return static_cast<TokenId>(last);
}

TokenId sample_next(std::span<const double> logits, double temperature, Rng& rng) {
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> w(logits.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp((logits[i] - m) / temperature);
  return sample_categorical(w, rng);
}

TokenId self_seed_select(std::span<const double> logits, std::span<const TokenId> context,
                         const SchemeSpec& spec, std::uint32_t max_attempts) {
  if (!spec.self_seeding) throw ValidationError("self_seed_select: self-seeding disabled");
  const auto n = static_cast<std::uint32_t>(logits.size());
  const std::uint32_t k_max = std::min(std::max(max_attempts, 1u), n);
  std::vector<TokenId> order(n);
  std::iota(order.begin(), order.end(), 0u);
  // Stable descending order; ties broken by token id.
  std::partial_sort(order.begin(), order.begin() + k_max, order.end(),
                    [&](TokenId a, TokenId b) {
                      return logits[a] > logits[b] || (logits[a] == logits[b] && a < b);
                    });
  const TokenId top = order[0];
  std::vector<TokenId> window(context.begin(), context.end());
  window.push_back(0);
  for (std::uint32_t k = 0; k < k_max; ++k) {
    const TokenId cand = order[k];
    // A candidate trailing the top token by more than delta cannot win even
    // when green, so the threshold is checked before the colour.
    if (logits[cand] + spec.delta < logits[top]) return top;
    window.back() = cand;
    if (is_green(cand, window, spec)) return cand;
  }
  return top;
}

namespace {

constexpr double kMaxFastBoost = 700.0;

std::vector<std::uint8_t> recompute_flags(const std::vector<TokenId>& tokens,
                                          std::uint32_t prompt_len, const SchemeSpec& spec) {
  const std::uint32_t w = spec.effective_window();
  const bool self = w > spec.window;
  std::vector<std::uint8_t> flags;
  flags.reserve(tokens.size() - prompt_len);
  for (std::size_t pos = prompt_len; pos < tokens.size(); ++pos) {
    const std::size_t end = self ? pos + 1 : pos;
    std::span<const TokenId> window(tokens.data() + end - w, w);
    flags.push_back(is_green(tokens[pos], window, spec) ? 1 : 0);
  }
  return flags;
}

}  // namespace

GenerationResult generate(const ToyModel& model, const SchemeSpec& spec,
                          std::span<const TokenId> prompt, std::uint32_t n_tokens,
                          std::uint64_t rng_seed) {
  spec.validate();
  if (spec.vocab_size != model.vocab_size())
    throw ValidationError("scheme and model vocabulary sizes differ");
  if (n_tokens == 0) throw ValidationError("n_tokens must be at least 1");
  if (prompt.size() < std::max<std::size_t>(spec.window, 1))
    throw ValidationError("insufficient context");
  for (TokenId t : prompt)
    if (t >= model.vocab_size()) throw ValidationError("prompt token id outside vocabulary");

  const double temperature = model.temperature();
  const double penalty = model.repetition_penalty();
  const bool self_seed = spec.self_seeding && spec.variant != Variant::Unigram;
  const bool fast = penalty == 1.0 && spec.delta / temperature <= kMaxFastBoost;
  const double boost = std::exp(spec.delta / temperature);
  const std::uint32_t h = spec.window;

  GenerationResult result;
  result.prompt_len = static_cast<std::uint32_t>(prompt.size());
  result.rng_seed = rng_seed;
  result.tokens.assign(prompt.begin(), prompt.end());
  result.tokens.reserve(prompt.size() + n_tokens);
  Rng rng(rng_seed);
  std::vector<double> weights(model.vocab_size());

  SchemeSpec scaled = spec;
  scaled.delta = spec.delta / temperature;

  for (std::uint32_t step = 0; step < n_tokens; ++step) {
    const auto& toks = result.tokens;
    const TokenId prev = toks.back();
    std::span<const TokenId> window(toks.data() + toks.size() - h, h);
    TokenId next;
    if (self_seed) {
      LogitVector l = model.logits(prev);
      apply_repetition_penalty(l, toks, penalty);
      for (double& x : l) x = x / temperature + rng.gumbel();
      next = self_seed_select(l, window, scaled);
    } else if (fast) {
      const auto row = model.row_weights(prev);
      std::copy(row.begin(), row.end(), weights.begin());
      for_each_green(window, spec, [&](TokenId t) { weights[t] *= boost; });
      next = sample_categorical(weights, rng);
    } else {
      LogitVector l = model.logits(prev);
      apply_repetition_penalty(l, toks, penalty);
      for_each_green(window, spec, [&](TokenId t) { l[t] += spec.delta; });
      next = sample_next(l, temperature, rng);
    }
    result.tokens.push_back(next);
  }
  result.green_flags = recompute_flags(result.tokens, result.prompt_len, spec);
  return result;
}

std::vector<TokenId> generate_plain(const ToyModel& model, std::span<const TokenId> prompt,
                                    std::uint32_t n_tokens, std::uint64_t rng_seed) {
  if (prompt.empty()) throw ValidationError("insufficient context");
  for (TokenId t : prompt)
    if (t >= model.vocab_size()) throw ValidationError("prompt token id outside vocabulary");
  std::vector<TokenId> tokens(prompt.begin(), prompt.end());
  tokens.reserve(prompt.size() + n_tokens);
  Rng rng(rng_seed);
  const double penalty = model.repetition_penalty();
  for (std::uint32_t step = 0; step < n_tokens; ++step) {
    if (penalty == 1.0) {
      tokens.push_back(sample_categorical(model.row_weights(tokens.back()), rng));
    } else {
      LogitVector l = model.logits(tokens.back());
      apply_repetition_penalty(l, tokens, penalty);
      tokens.push_back(sample_next(l, model.temperature(), rng));
    }
  }
  return tokens;
}

std::vector<TokenId> sample_prompt(const ToyModel& model, std::uint32_t length,
                                   std::uint64_t rng_seed) {
  if (length == 0) return {};
  Rng rng(rng_seed);
  const TokenId first = static_cast<TokenId>(rng.below(model.vocab_size()));
  const TokenId start[1] = {first};
  if (length == 1) return {first};
  return generate_plain(model, start, length - 1, rng());
}

}  // namespace seekmark
