#include "seekmark/attacks.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include "seekmark/error.hpp"

namespace seekmark {

TokenSequence scrub(const TokenSequence& seq, const ScrubConfig& cfg) {
  if (seq.tokens.empty()) throw ValidationError("scrub: empty sequence");
  if (seq.prompt_len > seq.tokens.size()) throw ValidationError("scrub: prompt_len too large");
  if (!(cfg.edit_rate >= 0.0 && cfg.edit_rate <= 1.0))
    throw ValidationError("attack.edit_rate: must lie in [0, 1]");
  if (cfg.vocab_size < 2) throw ValidationError("attack.vocab_size: must be at least 2");
  std::vector<EditKind> kinds;
  for (EditKind k : {EditKind::Substitute, EditKind::Delete, EditKind::Insert})
    if (cfg.allows(k)) kinds.push_back(k);
  if (kinds.empty()) throw ValidationError("attack.kinds: no edit kinds selected");

  const auto n = static_cast<std::uint32_t>(seq.tokens.size() - seq.prompt_len);
  const auto k = static_cast<std::uint32_t>(std::llround(cfg.edit_rate * n));
  Rng rng(cfg.rng_seed);
  std::vector<std::uint32_t> positions(n);
  std::iota(positions.begin(), positions.end(), 0u);
  for (std::uint32_t j = 0; j < k; ++j)
    std::swap(positions[j], positions[j + rng.below(n - j)]);
  positions.resize(k);
  std::sort(positions.begin(), positions.end(), std::greater<>());

  TokenSequence out = seq;
  for (std::uint32_t p : positions) {
    const std::size_t at = seq.prompt_len + p;
    const EditKind kind = kinds[rng.below(kinds.size())];
    switch (kind) {
      case EditKind::Substitute: {
        auto t = static_cast<TokenId>(rng.below(cfg.vocab_size - 1));
        if (t >= out.tokens[at]) ++t;
        out.tokens[at] = t;
        break;
      }
      case EditKind::Delete:
        out.tokens.erase(out.tokens.begin() + static_cast<std::ptrdiff_t>(at));
        break;
      case EditKind::Insert:
        out.tokens.insert(out.tokens.begin() + static_cast<std::ptrdiff_t>(at),
                          static_cast<TokenId>(rng.below(cfg.vocab_size)));
        break;
    }
  }
  return out;
}

CopyPasteResult copy_paste(std::span<const TokenId> wm, std::span<const TokenId> host,
                           const CopyPasteSpec& spec, std::uint64_t seed) {
  if (spec.m_slots < 1) throw ValidationError("copy_paste.m_slots: must be at least 1");
  if (!(spec.p_fraction > 0.0 && spec.p_fraction <= 1.0))
    throw ValidationError("copy_paste.p_fraction: must lie in (0, 1]");
  const auto n = static_cast<std::uint32_t>(host.size());
  const auto total = static_cast<std::uint32_t>(std::llround(spec.p_fraction * n));
  const std::uint32_t m = spec.m_slots;
  if (total < m) throw ValidationError("copy_paste: host too short for the requested slots");
  if (wm.size() < total) throw ValidationError("copy_paste: watermarked source too short");

  std::vector<std::uint32_t> lengths(m, total / m);
  for (std::uint32_t i = 0; i < total % m; ++i) ++lengths[i];

  // Stars and bars: m distinct cut points among free + m slots fix the gaps.
  const std::uint32_t free = n - total;
  Rng rng(seed);
  std::vector<std::uint32_t> cuts(free + m);
  std::iota(cuts.begin(), cuts.end(), 0u);
  for (std::uint32_t j = 0; j < m; ++j)
    std::swap(cuts[j], cuts[j + rng.below(cuts.size() - j)]);
  cuts.resize(m);
  std::sort(cuts.begin(), cuts.end());

  CopyPasteResult out;
  out.tokens.assign(host.begin(), host.end());
  std::uint32_t placed = 0;
  for (std::uint32_t k = 0; k < m; ++k) {
    const std::uint32_t start = cuts[k] - k + placed;
    std::copy_n(wm.begin() + placed, lengths[k], out.tokens.begin() + start);
    out.spans.emplace_back(start, start + lengths[k]);
    placed += lengths[k];
  }
  return out;
}

SpoofModel::SpoofModel(std::uint32_t vocab_size, std::uint32_t attacker_h, double ratio_threshold,
                       double pseudo_count)
    : vocab_size_(vocab_size),
      attacker_h_(attacker_h),
      ratio_threshold_(ratio_threshold),
      pseudo_count_(pseudo_count),
      bits_(static_cast<unsigned>(std::bit_width(vocab_size - 1))) {
  if (vocab_size < 2) throw ValidationError("spoof.vocab_size: must be at least 2");
  if (!(ratio_threshold > 1.0)) throw ValidationError("spoof.ratio_threshold: must exceed 1");
  if (!(pseudo_count > 0.0)) throw ValidationError("spoof.pseudo_count: must be positive");
}

bool SpoofModel::exact_contexts() const noexcept {
  return static_cast<std::uint64_t>(attacker_h_) * bits_ <= 64;
}

std::uint64_t SpoofModel::context_key(std::span<const TokenId> context) const noexcept {
  std::uint64_t key = 0;
  if (exact_contexts()) {
    for (TokenId t : context) key = (key << bits_) | t;
    return key;
  }
  key = attacker_h_;
  for (TokenId t : context) key = mix64(key ^ (t + kGolden));
  return key;
}

std::vector<TokenId> SpoofModel::unpack_context(std::uint64_t key) const {
  if (!exact_contexts()) throw ValidationError("spoof: contexts are hashed, not packed");
  std::vector<TokenId> out(attacker_h_);
  const std::uint64_t mask = (std::uint64_t{1} << bits_) - 1;
  for (std::uint32_t i = attacker_h_; i-- > 0;) {
    out[i] = static_cast<TokenId>(key & mask);
    key >>= bits_;
  }
  return out;
}

bool SpoofModel::estimated_green(const SpoofEntry& e) const noexcept {
  return (e.count_w + pseudo_count_) >= ratio_threshold_ * (e.count_b + pseudo_count_);
}

namespace {

auto context_range(const std::vector<SpoofEntry>& entries, std::uint64_t ctx) {
  return std::equal_range(entries.begin(), entries.end(), SpoofEntry{ctx, 0, 0, 0},
                          [](const SpoofEntry& a, const SpoofEntry& b) {
                            return a.context < b.context;
                          });
}

}  // namespace

bool SpoofModel::estimated_green(std::span<const TokenId> context, TokenId token) const {
  const auto [lo, hi] = context_range(entries_, context_key(context));
  const auto it = std::lower_bound(lo, hi, token, [](const SpoofEntry& e, TokenId t) {
    return e.token < t;
  });
  return it != hi && it->token == token && estimated_green(*it);
}

std::vector<TokenId> SpoofModel::green_estimate(std::span<const TokenId> context) const {
  std::vector<TokenId> out;
  const auto [lo, hi] = context_range(entries_, context_key(context));
  for (auto it = lo; it != hi; ++it)
    if (estimated_green(*it)) out.push_back(it->token);
  return out;
}

std::size_t SpoofModel::estimate_count() const noexcept {
  return static_cast<std::size_t>(std::count_if(
      entries_.begin(), entries_.end(), [&](const SpoofEntry& e) { return estimated_green(e); }));
}

namespace {

struct Observation {
  std::uint64_t context;
  TokenId token;
  friend bool operator<(const Observation& a, const Observation& b) {
    return a.context != b.context ? a.context < b.context : a.token < b.token;
  }
  friend bool operator==(const Observation&, const Observation&) = default;
};

std::vector<Observation> observe(const std::vector<TokenSequence>& corpus, const SpoofModel& sm) {
  std::vector<Observation> obs;
  std::size_t total = 0;
  for (const auto& s : corpus) total += s.tokens.size() - std::min<std::size_t>(s.prompt_len, s.tokens.size());
  obs.reserve(total);
  const std::uint32_t h = sm.attacker_h();
  for (const auto& s : corpus) {
    for (std::size_t pos = std::max<std::size_t>(s.prompt_len, h); pos < s.tokens.size(); ++pos) {
      const TokenId t = s.tokens[pos];
      if (t >= sm.vocab_size()) throw ValidationError("spoof: token id outside vocabulary");
      const std::span<const TokenId> ctx(s.tokens.data() + pos - h, h);
      obs.push_back({sm.context_key(ctx), t});
    }
  }
  std::sort(obs.begin(), obs.end());
  return obs;
}

}  // namespace

SpoofModel spoof_learn(const std::vector<TokenSequence>& wm_corpus,
                       const std::vector<TokenSequence>& base_corpus, std::uint32_t vocab_size,
                       std::uint32_t attacker_h, double ratio_threshold, double pseudo_count) {
  SpoofModel sm(vocab_size, attacker_h, ratio_threshold, pseudo_count);
  {
    const std::vector<Observation> w = observe(wm_corpus, sm);
    for (std::size_t i = 0; i < w.size();) {
      std::size_t j = i;
      while (j < w.size() && w[j] == w[i]) ++j;
      sm.entries_.push_back({w[i].context, w[i].token, static_cast<std::uint32_t>(j - i), 0});
      if (sm.contexts_.empty() || sm.contexts_.back().first != w[i].context)
        sm.contexts_.emplace_back(w[i].context, 0);
      sm.contexts_.back().second += static_cast<std::uint32_t>(j - i);
      i = j;
    }
  }
  const std::vector<Observation> b = observe(base_corpus, sm);
  auto e = sm.entries_.begin();
  for (std::size_t i = 0; i < b.size() && e != sm.entries_.end();) {
    std::size_t j = i;
    while (j < b.size() && b[j] == b[i]) ++j;
    const Observation key = b[i];
    while (e != sm.entries_.end() && Observation{e->context, e->token} < key) ++e;
    if (e != sm.entries_.end() && e->context == key.context && e->token == key.token)
      e->count_b = static_cast<std::uint32_t>(j - i);
    i = j;
  }
  return sm;
}

std::vector<TokenId> spoof_generate(const SpoofModel& sm, const ToyModel& base_model,
                                    double spoof_delta, std::span<const TokenId> prompt,
                                    std::uint32_t n_tokens, std::uint64_t seed) {
  if (!(spoof_delta >= 0.0) || !std::isfinite(spoof_delta))
    throw ValidationError("spoof_delta: must be finite and non-negative");
  if (sm.vocab_size() != base_model.vocab_size())
    throw ValidationError("spoof model and base model vocabulary sizes differ");
  const std::uint32_t h = sm.attacker_h();
  if (prompt.size() < std::max<std::size_t>(h, 1)) throw ValidationError("insufficient context");
  std::vector<TokenId> tokens(prompt.begin(), prompt.end());
  tokens.reserve(prompt.size() + n_tokens);
  Rng rng(seed);
  const double temperature = base_model.temperature();
  const double boost = std::exp(spoof_delta / temperature);
  const bool fast = base_model.repetition_penalty() == 1.0 && spoof_delta / temperature <= 700.0;
  std::vector<double> weights(base_model.vocab_size());
  for (std::uint32_t step = 0; step < n_tokens; ++step) {
    const std::span<const TokenId> ctx(tokens.data() + tokens.size() - h, h);
    const std::vector<TokenId> green = spoof_delta > 0.0 ? sm.green_estimate(ctx)
                                                         : std::vector<TokenId>{};
    if (fast) {
      const auto row = base_model.row_weights(tokens.back());
      std::copy(row.begin(), row.end(), weights.begin());
      for (TokenId t : green) weights[t] *= boost;
      tokens.push_back(sample_categorical(weights, rng));
    } else {
      LogitVector l = base_model.logits(tokens.back());
      apply_repetition_penalty(l, tokens, base_model.repetition_penalty());
      for (TokenId t : green) l[t] += spoof_delta;
      tokens.push_back(sample_next(l, temperature, rng));
    }
  }
  return tokens;
}

double spoof_precision(const SpoofModel& sm, const SchemeSpec& victim) {
  if (!sm.exact_contexts()) throw ValidationError("spoof_precision: contexts are hashed");
  if (sm.attacker_h() < victim.window)
    throw ValidationError("spoof_precision: attacker window shorter than the victim's");
  const bool self = victim.effective_window() > victim.window;
  std::size_t estimated = 0;
  std::size_t correct = 0;
  std::vector<TokenId> window;
  for (const auto& e : sm.entries()) {
    if (!sm.estimated_green(e)) continue;
    ++estimated;
    const std::vector<TokenId> ctx = sm.unpack_context(e.context);
    window.assign(ctx.end() - victim.window, ctx.end());
    if (self) window.push_back(e.token);
    if (is_green(e.token, window, victim)) ++correct;
  }
  return estimated == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(estimated);
}

double spoof_coverage(const SpoofModel& sm, std::uint32_t min_count) {
  if (sm.contexts().empty()) return 0.0;
  const auto k = std::count_if(sm.contexts().begin(), sm.contexts().end(),
                               [&](const auto& c) { return c.second >= min_count; });
  return static_cast<double>(k) / static_cast<double>(sm.contexts().size());
}

}  // namespace seekmark
