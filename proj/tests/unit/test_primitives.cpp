#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "golden_values.hpp"
#include "seekmark/error.hpp"
#include "seekmark/primitives.hpp"
#include "seekmark/random.hpp"

using namespace seekmark;

TEST(Random, MixAndRngMatchReference) {
  EXPECT_EQ(mix64(0), golden::kMix64Of0);
  EXPECT_EQ(mix64(1), golden::kMix64Of1);
  Rng r(1);
  for (auto v : golden::kRngSeed1) EXPECT_EQ(r(), v);
  Rng r42(42);
  for (auto v : golden::kRngSeed42Below1000) EXPECT_EQ(r42.below(1000), v);
  EXPECT_EQ(child_seed(1, "prompt", 7), golden::kChildSeedPrompt7);
}

TEST(Random, ChildSeedsDiffer) {
  EXPECT_NE(child_seed(1, "a", 0), child_seed(1, "b", 0));
  EXPECT_NE(child_seed(1, "a", 0), child_seed(1, "a", 1));
  EXPECT_NE(child_seed(1, "a", 0), child_seed(2, "a", 0));
}

TEST(Random, UniformInUnitInterval) {
  Rng r(9);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(HashToken, SingleBucketSpace) {
  for (TokenId t : {0u, 1u, 77u, 1023u}) EXPECT_EQ(hash_token(t, HashConfig{1, 123}), 1u);
}

TEST(HashToken, GoldenBuckets) {
  const HashConfig cfg{1u << 20, 0x5eed5eed5eed5eedULL};
  EXPECT_EQ(hash_token(0, cfg), golden::kHashT0D2e20);
  EXPECT_EQ(hash_token(1, cfg), golden::kHashT1D2e20);
}

TEST(HashToken, BucketCountsNearUniform) {
  const HashConfig cfg{16, 0x5eed5eed5eed5eedULL};
  std::vector<int> counts(17, 0);
  for (TokenId t = 0; t < 10000; ++t) ++counts[hash_token(t, cfg)];
  const double mean = 10000.0 / 16;
  const double sigma = std::sqrt(10000.0 * (1.0 / 16) * (15.0 / 16));
  for (int b = 1; b <= 16; ++b) EXPECT_NEAR(counts[b], mean, 5 * sigma) << "bucket " << b;
}

TEST(Cipher, Distinctness) {
  const SecretKey k(0x2545f4914f6cdd1dULL);
  EXPECT_NE(mix_cipher(1, k), mix_cipher(2, k));
  EXPECT_EQ(mix_cipher(1, k).value, golden::kCipher1);
  Rng r(5);
  for (int i = 0; i < 1000; ++i) {
    const std::uint64_t z = r();
    std::uint64_t a = r(), b = r();
    if (a == 0) a = 1;
    if (b == 0 || b == a) b = a + 1;
    ASSERT_NE(mix_cipher(z, SecretKey(a)), mix_cipher(z, SecretKey(b)));
  }
  EXPECT_EQ(mix_cipher(3, k, CipherMode::Product).value, 3 * k.value());
}

TEST(Cipher, ZeroKeyRejected) { EXPECT_THROW(SecretKey(0), ValidationError); }

TEST(Selection, EdgeCounts) {
  EXPECT_TRUE(seeded_green_selection(Cipher{5}, 10, 0).empty());
  auto all = seeded_green_selection(Cipher{5}, 10, 10);
  std::sort(all.begin(), all.end());
  for (std::uint32_t i = 0; i < 10; ++i) EXPECT_EQ(all[i], i);
  EXPECT_THROW(seeded_green_selection(Cipher{5}, 4, 5), ValidationError);
}

TEST(Selection, GoldenPicks) {
  const auto picks = seeded_green_selection(Cipher{golden::kCipher1}, 10, 4);
  ASSERT_EQ(picks.size(), 4u);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(picks[i], golden::kSelect_c1_10_4[i]);
}

TEST(Selection, DistinctnessMatchesCombinatorics) {
  // Two uniform 2-subsets of 8 coincide with probability 1/28.
  Rng r(11);
  int differ = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    auto a = seeded_green_selection(Cipher{r()}, 8, 2);
    auto b = seeded_green_selection(Cipher{r()}, 8, 2);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    differ += a != b;
  }
  const double p = golden::kDistinct_pool8_count2;
  EXPECT_NEAR(differ / double(n), p, 4 * std::sqrt(p * (1 - p) / n));
}

TEST(Selection, PointQueryMatchesSet) {
  Rng r(3);
  for (int i = 0; i < 200; ++i) {
    const Cipher c{r()};
    const auto picks = seeded_green_selection(c, 50, 12);
    std::set<std::uint32_t> s(picks.begin(), picks.end());
    EXPECT_EQ(s.size(), 12u);
    for (std::uint32_t t = 0; t < 50; ++t) ASSERT_EQ(is_selected(c, 50, 12, t), s.count(t) == 1);
  }
}

TEST(Partition, Ranges) {
  auto p = partition_subvocab(12, 3);
  EXPECT_EQ(p, (std::vector<TokenRange>{{0, 4}, {4, 8}, {8, 12}}));
  p = partition_subvocab(10, 3);
  EXPECT_EQ(p, (std::vector<TokenRange>{{0, 4}, {4, 7}, {7, 10}}));
  p = partition_subvocab(5, 5);
  for (std::uint32_t i = 0; i < 5; ++i) EXPECT_EQ(p[i], (TokenRange{i, i + 1}));
  EXPECT_THROW(partition_subvocab(4, 5), ValidationError);
  EXPECT_THROW(partition_subvocab(4, 0), ValidationError);
}

TEST(Partition, IndexConsistentWithRanges) {
  for (std::uint32_t v : {10u, 97u, 1024u})
    for (std::uint32_t d : {1u, 3u, 6u, 7u}) {
      const auto p = partition_subvocab(v, d);
      for (std::uint32_t i = 0; i < d; ++i)
        for (TokenId t = p[i].begin; t < p[i].end; ++t) ASSERT_EQ(subvocab_index(t, v, d), i);
    }
}
