#pragma once

// Per-step green/red partitions for the KGW family (Left, Skip, Sum, Min),
// UNIGRAM and SEEK.
//
// A "window" passed to the functions below is the effective watermark
// window: the h tokens preceding the scored position, followed by the
// candidate token itself when self-seeding is enabled (h + 1 tokens).

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "seekmark/primitives.hpp"

namespace seekmark {

/// floor(gamma * n), tolerant to the representation error of gamma.
inline std::uint32_t green_fraction_count(double gamma, std::uint32_t n) noexcept {
  return static_cast<std::uint32_t>(gamma * n + 1e-9);
}

enum class Variant { KgwLeft, KgwSkip, KgwSum, KgwMin, Unigram, Seek };

std::string_view variant_name(Variant v) noexcept;
/// Accepts the names produced by variant_name ("kgw-left", "seek", ...).
Variant parse_variant(std::string_view name);

struct SchemeSpec {
  Variant variant = Variant::Seek;
  std::uint32_t vocab_size = 1024;
  double gamma = 0.25;
  double delta = 5.0;
  /// Watermark window h. Forced to 0 for UNIGRAM.
  std::uint32_t window = 6;
  HashConfig hash{6, 0x5eed5eed5eed5eedULL};
  std::uint64_t secret_key = 0x2545f4914f6cdd1dULL;
  bool self_seeding = false;
  CipherMode cipher_mode = CipherMode::Keyed;
  /// Optional explicit identifier; default_id() is used when empty.
  std::string id;

  /// Throws ValidationError naming the offending field.
  void validate() const;

  /// Tokens in the effective window: h, or h + 1 with self-seeding.
  std::uint32_t effective_window() const noexcept {
    return window + (self_seeding && variant != Variant::Unigram ? 1u : 0u);
  }
  /// Green-list size for non-SEEK variants: floor(gamma * |V|).
  std::uint32_t green_count() const noexcept;
  /// popcount of every mask this spec produces.
  std::uint32_t mask_popcount() const noexcept;

  std::string scheme_id() const;
  std::string default_id() const;

  SecretKey key() const { return SecretKey(secret_key); }
};

/// Convenience constructors for the schemes used throughout the toolkit.
SchemeSpec make_kgw_left(std::uint32_t vocab_size, double gamma, double delta);
SchemeSpec make_kgw_skip(std::uint32_t vocab_size, std::uint32_t h, double gamma, double delta);
SchemeSpec make_kgw_sum(std::uint32_t vocab_size, std::uint32_t h, double gamma, double delta);
SchemeSpec make_kgw_min(std::uint32_t vocab_size, std::uint32_t h, std::uint32_t d, double gamma,
                        double delta);
SchemeSpec make_unigram(std::uint32_t vocab_size, double gamma, double delta);
SchemeSpec make_seek(std::uint32_t vocab_size, std::uint32_t h, std::uint32_t d, double gamma,
                     double delta);

/// JSON object with fields variant, gamma, delta, window_size, hash_space,
/// secret_key, self_seeding (plus vocab_size, hash_key, cipher_mode, id).
std::string scheme_to_json(const SchemeSpec& spec);
/// Inverse of scheme_to_json; missing optional fields take defaults.
SchemeSpec scheme_from_json(std::string_view json_text);

struct WindowSignature {
  /// Sorted, distinct buckets in {1..d}.
  std::vector<std::uint32_t> buckets;
  std::vector<TokenId> raw_window;

  bool contains(std::uint32_t bucket) const noexcept;
};

/// Bucket set of the window. Throws "window overflow" when the window is
/// longer than the effective window and "insufficient context" when shorter
/// unless allow_short is set.
WindowSignature signature(std::span<const TokenId> window, const SchemeSpec& spec,
                          bool allow_short = false);

/// Min of the signature's buckets. Throws "empty window" on an empty one.
std::uint32_t texture_key_min(const WindowSignature& sig);

Cipher texture_key_sum(std::span<const TokenId> window, SecretKey xi,
                       CipherMode mode = CipherMode::Keyed);
Cipher texture_key_skip(std::span<const TokenId> window, SecretKey xi,
                        CipherMode mode = CipherMode::Keyed);
Cipher texture_key_left(std::span<const TokenId> window, SecretKey xi,
                        CipherMode mode = CipherMode::Keyed);

class GreenMask {
 public:
  GreenMask() = default;
  explicit GreenMask(std::uint32_t vocab_size) : members_(vocab_size, 0) {}

  std::uint32_t size() const noexcept { return static_cast<std::uint32_t>(members_.size()); }
  bool contains(TokenId t) const noexcept { return members_[t] != 0; }
  void insert(TokenId t) noexcept { members_[t] = 1; }
  std::uint32_t popcount() const noexcept;
  std::span<const std::uint8_t> members() const noexcept { return members_; }

  friend bool operator==(const GreenMask&, const GreenMask&) = default;

 private:
  std::vector<std::uint8_t> members_;
};

/// Single-cipher partition for the KGW variants and UNIGRAM.
GreenMask green_mask_kgw(std::span<const TokenId> window, const SchemeSpec& spec);
/// Union of d sub-green lists, one per sub-vocabulary.
GreenMask green_mask_seek(std::span<const TokenId> window, const SchemeSpec& spec);
/// SEEK mask from a bucket set directly (used for diversity enumeration).
GreenMask seek_mask_from_buckets(std::span<const std::uint32_t> buckets, const SchemeSpec& spec);
/// Dispatches on spec.variant.
GreenMask green_mask(std::span<const TokenId> window, const SchemeSpec& spec);

/// Point query equal to green_mask(window, spec).contains(token), without
/// building the mask.
bool is_green(TokenId token, std::span<const TokenId> window, const SchemeSpec& spec);

/// Calls fn(token) for every green token of the step. The window must be
/// valid; no checks are performed. Used by the generation hot loop.
template <class Fn>
void for_each_green(std::span<const TokenId> window, const SchemeSpec& spec, Fn&& fn);

/// Cipher of a KGW-family or UNIGRAM step (no validation).
Cipher kgw_cipher(std::span<const TokenId> window, const SchemeSpec& spec) noexcept;
/// Cipher of SEEK sub-vocabulary `bucket` (1-based) given membership in I.
Cipher seek_subcipher(std::uint32_t bucket, bool in_signature, const SchemeSpec& spec) noexcept;

// ---------------------------------------------------------------------------

template <class Fn>
void for_each_green(std::span<const TokenId> window, const SchemeSpec& spec, Fn&& fn) {
  if (spec.variant != Variant::Seek) {
    for_each_selected(kgw_cipher(window, spec), spec.vocab_size, spec.green_count(),
                      [&](std::uint32_t t) { fn(static_cast<TokenId>(t)); });
    return;
  }
  const std::uint32_t d = spec.hash.d;
  // Bucket membership for d <= 64 fits a word; larger spaces use a vector.
  std::uint64_t small = 0;
  std::vector<std::uint8_t> large;
  if (d <= 64) {
    for (TokenId t : window) small |= std::uint64_t{1} << (hash_token(t, spec.hash) - 1);
  } else {
    large.assign(d, 0);
    for (TokenId t : window) large[hash_token(t, spec.hash) - 1] = 1;
  }
  for (std::uint32_t i = 0; i < d; ++i) {
    const bool present = d <= 64 ? ((small >> i) & 1u) != 0 : large[i] != 0;
    const TokenRange range = subvocab_range(i, spec.vocab_size, d);
    const std::uint32_t count = green_fraction_count(spec.gamma, range.size());
    for_each_selected(seek_subcipher(i + 1, present, spec), range.size(), count,
                      [&](std::uint32_t k) { fn(static_cast<TokenId>(range.begin + k)); });
  }
}

}  // namespace seekmark
