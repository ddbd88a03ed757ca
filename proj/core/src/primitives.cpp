#include "seekmark/primitives.hpp"

#include "seekmark/error.hpp"

namespace seekmark {

Vocabulary::Vocabulary(std::uint32_t size) : size_(size) {
  if (size < 2) throw ValidationError("vocabulary size must be at least 2");
}

SecretKey::SecretKey(std::uint64_t xi) : xi_(xi) {
  if (xi == 0) throw ValidationError("secret key must be nonzero");
}

namespace detail {

SparseSlots& thread_slots() {
  thread_local SparseSlots slots;
  return slots;
}

}  // namespace detail

std::vector<std::uint32_t> seeded_green_selection(Cipher c, std::uint32_t pool_size,
                                                  std::uint32_t count) {
  if (count > pool_size) throw ValidationError("green size exceeds pool");
  std::vector<std::uint32_t> out;
  out.reserve(count);
  for_each_selected(c, pool_size, count, [&](std::uint32_t i) { out.push_back(i); });
  return out;
}

bool is_selected(Cipher c, std::uint32_t pool_size, std::uint32_t count, std::uint32_t index) {
  if (count == 0 || index >= pool_size) return false;
  if (count == pool_size) return true;
  auto& slots = detail::thread_slots();
  slots.reset(pool_size);
  Rng rng(c.value);
  for (std::uint32_t j = 0; j < count; ++j) {
    const auto r = j + static_cast<std::uint32_t>(rng.below(pool_size - j));
    const std::uint32_t picked = slots.get(r);
    if (picked == index) return true;
    slots.set(r, slots.get(j));
    slots.set(j, picked);
  }
  return false;
}

std::vector<TokenRange> partition_subvocab(std::uint32_t v_size, std::uint32_t d) {
  if (d == 0) throw ValidationError("hash space must be at least 1");
  if (d > v_size) throw ValidationError("hash space exceeds vocabulary");
  std::vector<TokenRange> out;
  out.reserve(d);
  for (std::uint32_t i = 0; i < d; ++i) out.push_back(subvocab_range(i, v_size, d));
  return out;
}

}  // namespace seekmark
