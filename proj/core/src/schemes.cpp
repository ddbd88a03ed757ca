#include "seekmark/schemes.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "seekmark/error.hpp"

namespace seekmark {

namespace {

constexpr std::pair<Variant, std::string_view> kVariantNames[] = {
    {Variant::KgwLeft, "kgw-left"}, {Variant::KgwSkip, "kgw-skip"}, {Variant::KgwSum, "kgw-sum"},
    {Variant::KgwMin, "kgw-min"},   {Variant::Unigram, "unigram"},  {Variant::Seek, "seek"},
};

bool uses_hash_space(Variant v) { return v == Variant::KgwMin || v == Variant::Seek; }

}  // namespace

std::string_view variant_name(Variant v) noexcept {
  for (const auto& [variant, name] : kVariantNames)
    if (variant == v) return name;
  return "unknown";
}

Variant parse_variant(std::string_view name) {
  for (const auto& [variant, n] : kVariantNames)
    if (n == name) return variant;
  throw ValidationError("unknown scheme variant '" + std::string(name) + "'");
}

void SchemeSpec::validate() const {
  if (vocab_size < 2) throw ValidationError("scheme.vocab_size: must be at least 2");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ValidationError("scheme.gamma: must lie in (0, 1)");
  if (!(std::isfinite(delta) && delta >= 0.0))
    throw ValidationError("scheme.delta: must be finite and non-negative");
  if (variant == Variant::Unigram) {
    if (window != 0) throw ValidationError("scheme.window_size: UNIGRAM uses h = 0");
  } else if (window == 0) {
    throw ValidationError("scheme.window_size: must be at least 1");
  }
  if (hash.d == 0) throw ValidationError("scheme.hash_space: must be at least 1");
  if (uses_hash_space(variant) && hash.d > vocab_size)
    throw ValidationError("scheme.hash_space: hash space exceeds vocabulary");
  if (secret_key == 0) throw ValidationError("scheme.secret_key: must be nonzero");
  if (green_fraction_count(gamma, vocab_size) < 1)
    throw ValidationError("scheme.gamma: gamma * |V| must be at least 1");
}

std::uint32_t SchemeSpec::green_count() const noexcept {
  return green_fraction_count(gamma, vocab_size);
}

std::uint32_t SchemeSpec::mask_popcount() const noexcept {
  if (variant != Variant::Seek) return green_count();
  std::uint32_t total = 0;
  for (std::uint32_t i = 0; i < hash.d; ++i)
    total += green_fraction_count(gamma, subvocab_range(i, vocab_size, hash.d).size());
  return total;
}

std::string SchemeSpec::default_id() const {
  std::string out(variant_name(variant));
  if (variant != Variant::Unigram) out += "-h" + std::to_string(window);
  if (uses_hash_space(variant)) out += "-d" + std::to_string(hash.d);
  if (self_seeding && variant != Variant::Unigram) out += "-ss";
  return out;
}

std::string SchemeSpec::scheme_id() const { return id.empty() ? default_id() : id; }

SchemeSpec make_kgw_left(std::uint32_t vocab_size, double gamma, double delta) {
  SchemeSpec s;
  s.variant = Variant::KgwLeft;
  s.vocab_size = vocab_size;
  s.gamma = gamma;
  s.delta = delta;
  s.window = 1;
  s.hash.d = vocab_size;
  return s;
}

SchemeSpec make_kgw_skip(std::uint32_t vocab_size, std::uint32_t h, double gamma, double delta) {
  SchemeSpec s = make_kgw_left(vocab_size, gamma, delta);
  s.variant = Variant::KgwSkip;
  s.window = h;
  return s;
}

SchemeSpec make_kgw_sum(std::uint32_t vocab_size, std::uint32_t h, double gamma, double delta) {
  SchemeSpec s = make_kgw_left(vocab_size, gamma, delta);
  s.variant = Variant::KgwSum;
  s.window = h;
  return s;
}

SchemeSpec make_kgw_min(std::uint32_t vocab_size, std::uint32_t h, std::uint32_t d, double gamma,
                        double delta) {
  SchemeSpec s = make_kgw_left(vocab_size, gamma, delta);
  s.variant = Variant::KgwMin;
  s.window = h;
  s.hash.d = d;
  return s;
}

SchemeSpec make_unigram(std::uint32_t vocab_size, double gamma, double delta) {
  SchemeSpec s = make_kgw_left(vocab_size, gamma, delta);
  s.variant = Variant::Unigram;
  s.window = 0;
  s.hash.d = 1;
  return s;
}

SchemeSpec make_seek(std::uint32_t vocab_size, std::uint32_t h, std::uint32_t d, double gamma,
                     double delta) {
  SchemeSpec s = make_kgw_left(vocab_size, gamma, delta);
  s.variant = Variant::Seek;
  s.window = h;
  s.hash.d = d;
  return s;
}

std::string scheme_to_json(const SchemeSpec& spec) {
  nlohmann::json j;
  j["id"] = spec.scheme_id();
  j["variant"] = std::string(variant_name(spec.variant));
  j["vocab_size"] = spec.vocab_size;
  j["gamma"] = spec.gamma;
  j["delta"] = spec.delta;
  j["window_size"] = spec.window;
  j["hash_space"] = spec.hash.d;
  j["hash_key"] = spec.hash.key;
  j["secret_key"] = spec.secret_key;
  j["self_seeding"] = spec.self_seeding;
  j["cipher_mode"] = spec.cipher_mode == CipherMode::Keyed ? "keyed" : "product";
  return j.dump();
}

SchemeSpec scheme_from_json(std::string_view json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("scheme: malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("scheme: expected a JSON object");
  SchemeSpec s;
  try {
    if (!j.contains("variant")) throw ValidationError("scheme.variant: missing");
    s.variant = parse_variant(j.at("variant").get<std::string>());
    s.vocab_size = j.value("vocab_size", s.vocab_size);
    s.gamma = j.value("gamma", s.gamma);
    s.delta = j.value("delta", s.delta);
    const std::uint32_t default_window =
        s.variant == Variant::Unigram ? 0u : (s.variant == Variant::KgwLeft ? 1u : s.window);
    s.window = j.value("window_size", default_window);
    const std::uint32_t default_d =
        s.variant == Variant::Unigram ? 1u : (s.variant == Variant::Seek ? s.hash.d : s.vocab_size);
    s.hash.d = j.value("hash_space", default_d);
    s.hash.key = j.value("hash_key", s.hash.key);
    s.secret_key = j.value("secret_key", s.secret_key);
    s.self_seeding = j.value("self_seeding", false);
    const std::string mode = j.value("cipher_mode", std::string("keyed"));
    if (mode == "keyed") {
      s.cipher_mode = CipherMode::Keyed;
    } else if (mode == "product") {
      s.cipher_mode = CipherMode::Product;
    } else {
      throw ValidationError("scheme.cipher_mode: expected 'keyed' or 'product'");
    }
    s.id = j.value("id", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("scheme: wrong field type: ") + e.what());
  }
  s.validate();
  return s;
}

bool WindowSignature::contains(std::uint32_t bucket) const noexcept {
  return std::binary_search(buckets.begin(), buckets.end(), bucket);
}

WindowSignature signature(std::span<const TokenId> window, const SchemeSpec& spec,
                          bool allow_short) {
  const std::uint32_t expected = spec.effective_window();
  if (window.size() > expected) throw ValidationError("window overflow");
  if (window.size() < expected && !allow_short) throw ValidationError("insufficient context");
  WindowSignature sig;
  sig.raw_window.assign(window.begin(), window.end());
  sig.buckets.reserve(window.size());
  for (TokenId t : window) sig.buckets.push_back(hash_token(t, spec.hash));
  std::sort(sig.buckets.begin(), sig.buckets.end());
  sig.buckets.erase(std::unique(sig.buckets.begin(), sig.buckets.end()), sig.buckets.end());
  return sig;
}

std::uint32_t texture_key_min(const WindowSignature& sig) {
  if (sig.buckets.empty()) throw ValidationError("empty window");
  return sig.buckets.front();
}

Cipher texture_key_sum(std::span<const TokenId> window, SecretKey xi, CipherMode mode) {
  if (window.empty()) throw ValidationError("empty window");
  std::uint64_t sum = 0;
  for (TokenId t : window) sum += t;  // wraps mod 2^64
  return mix_cipher(sum, xi, mode);
}

Cipher texture_key_skip(std::span<const TokenId> window, SecretKey xi, CipherMode mode) {
  if (window.empty()) throw ValidationError("empty window");
  return mix_cipher(window.front(), xi, mode);
}

Cipher texture_key_left(std::span<const TokenId> window, SecretKey xi, CipherMode mode) {
  if (window.empty()) throw ValidationError("empty window");
  return mix_cipher(window.back(), xi, mode);
}

Cipher kgw_cipher(std::span<const TokenId> window, const SchemeSpec& spec) noexcept {
  const SecretKey xi(spec.secret_key);
  const CipherMode mode = spec.cipher_mode;
  switch (spec.variant) {
    case Variant::KgwLeft:
      return mix_cipher(window.back(), xi, mode);
    case Variant::KgwSkip:
      return mix_cipher(window.front(), xi, mode);
    case Variant::KgwSum: {
      std::uint64_t sum = 0;
      for (TokenId t : window) sum += t;
      return mix_cipher(sum, xi, mode);
    }
    case Variant::KgwMin: {
      std::uint32_t m = spec.hash.d;
      for (TokenId t : window) m = std::min(m, hash_token(t, spec.hash));
      return mix_cipher(m, xi, mode);
    }
    case Variant::Unigram:
    case Variant::Seek:
      break;
  }
  // UNIGRAM is KGW-Min over the single-bucket space: texture key 1.
  return mix_cipher(1, xi, mode);
}

Cipher seek_subcipher(std::uint32_t bucket, bool in_signature, const SchemeSpec& spec) noexcept {
  const SecretKey xi(spec.secret_key);
  if (in_signature) return mix_cipher(bucket, xi, spec.cipher_mode);
  // Default cipher shared by all absent buckets: -xi for the literal product,
  // the sentinel texture key 0 (outside {1..d}) when keyed.
  if (spec.cipher_mode == CipherMode::Product) return Cipher{0 - spec.secret_key};
  return mix_cipher(0, xi, CipherMode::Keyed);
}

std::uint32_t GreenMask::popcount() const noexcept {
  return static_cast<std::uint32_t>(std::count(members_.begin(), members_.end(), 1));
}

namespace {

void check_window(std::span<const TokenId> window, const SchemeSpec& spec) {
  if (window.size() > spec.effective_window()) throw ValidationError("window overflow");
  if (window.size() < spec.effective_window()) throw ValidationError("insufficient context");
  for (TokenId t : window)
    if (t >= spec.vocab_size) throw ValidationError("token id outside vocabulary");
}

}  // namespace

GreenMask green_mask_kgw(std::span<const TokenId> window, const SchemeSpec& spec) {
  if (spec.variant == Variant::Seek) throw ValidationError("green_mask_kgw: SEEK spec");
  check_window(window, spec);
  GreenMask mask(spec.vocab_size);
  for_each_selected(kgw_cipher(window, spec), spec.vocab_size, spec.green_count(),
                    [&](std::uint32_t t) { mask.insert(t); });
  return mask;
}

GreenMask seek_mask_from_buckets(std::span<const std::uint32_t> buckets, const SchemeSpec& spec) {
  const std::uint32_t d = spec.hash.d;
  std::vector<std::uint8_t> present(d, 0);
  for (std::uint32_t b : buckets) {
    if (b < 1 || b > d) throw ValidationError("bucket outside hash space");
    present[b - 1] = 1;
  }
  GreenMask mask(spec.vocab_size);
  for (std::uint32_t i = 0; i < d; ++i) {
    const TokenRange range = subvocab_range(i, spec.vocab_size, d);
    for_each_selected(seek_subcipher(i + 1, present[i] != 0, spec), range.size(),
                      green_fraction_count(spec.gamma, range.size()),
                      [&](std::uint32_t k) { mask.insert(range.begin + k); });
  }
  return mask;
}

GreenMask green_mask_seek(std::span<const TokenId> window, const SchemeSpec& spec) {
  if (spec.variant != Variant::Seek) throw ValidationError("green_mask_seek: not a SEEK spec");
  if (spec.hash.d > spec.vocab_size) throw ValidationError("hash space exceeds vocabulary");
  check_window(window, spec);
  const WindowSignature sig = signature(window, spec);
  return seek_mask_from_buckets(sig.buckets, spec);
}

GreenMask green_mask(std::span<const TokenId> window, const SchemeSpec& spec) {
  return spec.variant == Variant::Seek ? green_mask_seek(window, spec)
                                       : green_mask_kgw(window, spec);
}

bool is_green(TokenId token, std::span<const TokenId> window, const SchemeSpec& spec) {
  check_window(window, spec);
  if (token >= spec.vocab_size) throw ValidationError("token id outside vocabulary");
  if (spec.variant != Variant::Seek)
    return is_selected(kgw_cipher(window, spec), spec.vocab_size, spec.green_count(), token);

  const std::uint32_t d = spec.hash.d;
  const std::uint32_t j = subvocab_index(token, spec.vocab_size, d);
  const bool present = std::any_of(window.begin(), window.end(), [&](TokenId t) {
    return hash_token(t, spec.hash) == j + 1;
  });
  const TokenRange range = subvocab_range(j, spec.vocab_size, d);
  return is_selected(seek_subcipher(j + 1, present, spec), range.size(),
                     green_fraction_count(spec.gamma, range.size()), token - range.begin);
}

}  // namespace seekmark
