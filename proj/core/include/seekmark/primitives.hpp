#pragma once

// Keyed token hashing, cipher mixing, seeded green-list selection and
// sub-vocabulary partitioning. All functions are pure.

#include <algorithm>
#include <cstdint>
#include <span>
#include <vector>

#include "seekmark/random.hpp"

namespace seekmark {

/// Token ids are contiguous in [0, |V|).
using TokenId = std::uint32_t;

class Vocabulary {
 public:
  /// Throws ValidationError when size < 2.
  explicit Vocabulary(std::uint32_t size);

  std::uint32_t size() const noexcept { return size_; }
  bool contains(TokenId t) const noexcept { return t < size_; }

 private:
  std::uint32_t size_;
};

/// The provider's secret key. Zero is rejected.
class SecretKey {
 public:
  explicit SecretKey(std::uint64_t xi);
  std::uint64_t value() const noexcept { return xi_; }
  friend bool operator==(SecretKey, SecretKey) = default;

 private:
  std::uint64_t xi_;
};

/// Hash space {1, ..., d} and the key of the token hash, independent of the
/// secret key.
struct HashConfig {
  std::uint32_t d = 1;
  std::uint64_t key = 0x5eed5eed5eed5eedULL;
};

/// Seed of one vocabulary partition.
struct Cipher {
  std::uint64_t value = 0;
  friend bool operator==(Cipher, Cipher) = default;
};

/// How a texture key and the secret key are combined into a cipher.
enum class CipherMode {
  /// mix64(mix64(zeta + golden) ^ xi): a bijection in zeta for fixed xi.
  Keyed,
  /// zeta * xi in wrapping 64-bit arithmetic, the literal product.
  Product,
};

/// Bucket in {1, ..., d}: 1 + (M(t, key) mod d) with
/// M(t, key) = mix64(t ^ mix64(key)).
inline std::uint32_t hash_token(TokenId t, const HashConfig& cfg) noexcept {
  const std::uint64_t m = mix64(static_cast<std::uint64_t>(t) ^ mix64(cfg.key));
  return 1 + static_cast<std::uint32_t>(m % cfg.d);
}

inline Cipher mix_cipher(std::uint64_t zeta, SecretKey xi,
                         CipherMode mode = CipherMode::Keyed) noexcept {
  if (mode == CipherMode::Product) return Cipher{zeta * xi.value()};
  return Cipher{mix64(mix64(zeta + kGolden) ^ xi.value())};
}

/// Selects `count` distinct indices of [0, pool_size) by a partial
/// Fisher-Yates shuffle driven by Rng(cipher.value): for j = 0..count-1,
/// swap slot j with slot j + below(pool_size - j). Returned in pick order.
/// Throws ValidationError("green size exceeds pool") when count > pool_size.
std::vector<std::uint32_t> seeded_green_selection(Cipher c, std::uint32_t pool_size,
                                                  std::uint32_t count);

/// Calls fn(index) for every index the selection above would return, in the
/// same order, without allocating. Preconditions as above (unchecked).
template <class Fn>
void for_each_selected(Cipher c, std::uint32_t pool_size, std::uint32_t count, Fn&& fn);

/// True iff `index` is in seeded_green_selection(c, pool_size, count).
/// Stops as soon as the index is picked.
bool is_selected(Cipher c, std::uint32_t pool_size, std::uint32_t count,
                 std::uint32_t index);

/// Half-open token range [begin, end).
struct TokenRange {
  std::uint32_t begin = 0;
  std::uint32_t end = 0;
  std::uint32_t size() const noexcept { return end - begin; }
  friend bool operator==(TokenRange, TokenRange) = default;
};

/// d contiguous ranges covering [0, v_size); the first v_size mod d ranges
/// get one extra token. Throws ValidationError("hash space exceeds
/// vocabulary") when d > v_size, and for d == 0.
std::vector<TokenRange> partition_subvocab(std::uint32_t v_size, std::uint32_t d);

/// 0-based index of the sub-vocabulary holding token t under the partition
/// above (no allocation).
inline std::uint32_t subvocab_index(TokenId t, std::uint32_t v_size, std::uint32_t d) noexcept {
  const std::uint32_t q = v_size / d;
  const std::uint32_t r = v_size % d;
  const std::uint32_t front = r * (q + 1);
  if (t < front) return t / (q + 1);
  return r + (t - front) / q;
}

inline TokenRange subvocab_range(std::uint32_t index, std::uint32_t v_size,
                                 std::uint32_t d) noexcept {
  const std::uint32_t q = v_size / d;
  const std::uint32_t r = v_size % d;
  const std::uint32_t begin = index * q + (index < r ? index : r);
  return TokenRange{begin, begin + q + (index < r ? 1u : 0u)};
}

namespace detail {

// Virtual identity array for sparse partial shuffles: slot i holds i until it
// is written. Cleared in O(1) by bumping the epoch.
class SparseSlots {
 public:
  void reset(std::uint32_t n) {
    if (stamp_.size() < n) {
      stamp_.assign(n, 0);
      value_.resize(n);
      epoch_ = 0;
    }
    if (++epoch_ == 0) {
      std::fill(stamp_.begin(), stamp_.end(), 0);
      epoch_ = 1;
    }
  }
  std::uint32_t get(std::uint32_t i) const noexcept {
    return stamp_[i] == epoch_ ? value_[i] : i;
  }
  void set(std::uint32_t i, std::uint32_t v) noexcept {
    stamp_[i] = epoch_;
    value_[i] = v;
  }

 private:
  std::vector<std::uint32_t> stamp_;
  std::vector<std::uint32_t> value_;
  std::uint32_t epoch_ = 0;
};

SparseSlots& thread_slots();

}  // namespace detail

template <class Fn>
void for_each_selected(Cipher c, std::uint32_t pool_size, std::uint32_t count, Fn&& fn) {
  if (count == 0) return;
  auto& slots = detail::thread_slots();
  slots.reset(pool_size);
  Rng rng(c.value);
  for (std::uint32_t j = 0; j < count; ++j) {
    const auto r = j + static_cast<std::uint32_t>(rng.below(pool_size - j));
    const std::uint32_t picked = slots.get(r);
    slots.set(r, slots.get(j));
    slots.set(j, picked);
    fn(picked);
  }
}

}  // namespace seekmark
