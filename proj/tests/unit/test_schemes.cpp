#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "golden_values.hpp"
#include "seekmark/error.hpp"
#include "seekmark/schemes.hpp"

using namespace seekmark;

namespace {

std::vector<TokenId> random_window(Rng& r, std::uint32_t h, std::uint32_t v) {
  std::vector<TokenId> w(h);
  for (auto& t : w) t = static_cast<TokenId>(r.below(v));
  return w;
}

}  // namespace

TEST(Signature, SingleBucketAndRepeats) {
  SchemeSpec s = make_seek(64, 4, 1, 0.25, 2.0);
  const std::vector<TokenId> w{3, 9, 27, 40};
  EXPECT_EQ(signature(w, s).buckets, std::vector<std::uint32_t>{1});
  s.hash.d = 16;
  const std::vector<TokenId> same{7, 7, 7, 7};
  EXPECT_EQ(signature(same, s).buckets.size(), 1u);
}

TEST(Signature, WindowLengthChecks) {
  const SchemeSpec s = make_seek(64, 4, 8, 0.25, 2.0);
  const std::vector<TokenId> shortw{1, 2}, longw{1, 2, 3, 4, 5};
  EXPECT_THROW(signature(shortw, s), ValidationError);
  EXPECT_NO_THROW(signature(shortw, s, true));
  EXPECT_THROW(signature(longw, s), ValidationError);
}

TEST(Signature, OccupancyMatchesFormula) {
  const SchemeSpec s = make_seek(1024, 6, 6, 0.25, 2.0);
  Rng r(17);
  double total = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) total += signature(random_window(r, 6, 1024), s).buckets.size();
  const double expected = 6.0 * (1.0 - std::pow(5.0 / 6.0, 6));
  EXPECT_NEAR(total / n, expected, 0.02 * expected);
}

TEST(TextureKey, MinOfBuckets) {
  WindowSignature sig;
  sig.buckets = {1, 3, 5};
  EXPECT_EQ(texture_key_min(sig), 1u);
  sig.buckets = {9};
  EXPECT_EQ(texture_key_min(sig), 9u);
  sig.buckets.clear();
  EXPECT_THROW(texture_key_min(sig), ValidationError);
}

TEST(TextureKey, MinOrderStatisticPmf) {
  const std::uint32_t h = 4, d = 16;
  // A large id space keeps the finite-vocabulary bucket imbalance negligible.
  const std::uint32_t v = 1u << 24;
  const SchemeSpec s = make_kgw_min(v, h, d, 0.25, 2.0);
  Rng r(23);
  const int n = 100000;
  std::vector<int> counts(d + 1, 0);
  for (int i = 0; i < n; ++i) ++counts[texture_key_min(signature(random_window(r, h, v), s))];
  for (std::uint32_t m = 1; m <= d; ++m) {
    const double p = (std::pow(d - m + 1.0, h) - std::pow(d - m + 0.0, h)) / std::pow(d, h);
    EXPECT_NEAR(counts[m] / double(n), p, 5 * std::sqrt(p * (1 - p) / n) + 1e-9) << "m=" << m;
  }
}

TEST(TextureKey, AggregationInvariances) {
  const SecretKey k(99);
  const std::vector<TokenId> a{2, 3}, b{3, 2};
  EXPECT_EQ(texture_key_sum(a, k), texture_key_sum(b, k));
  const std::vector<TokenId> s1{5, 1, 2, 3}, s2{5, 8, 9, 10};
  EXPECT_EQ(texture_key_skip(s1, k), texture_key_skip(s2, k));
  const std::vector<TokenId> l1{4, 4, 7}, l2{7};
  EXPECT_EQ(texture_key_left(l1, k), texture_key_left(l2, k));
  EXPECT_THROW(texture_key_left(std::span<const TokenId>{}, k), ValidationError);
}

TEST(GreenMask, SizeContracts) {
  const SchemeSpec kgw = make_kgw_min(8, 2, 2, 0.25, 2.0);
  const std::vector<TokenId> w{1, 2};
  EXPECT_EQ(green_mask(w, kgw).popcount(), 2u);
  const SchemeSpec seek = make_seek(12, 2, 3, 0.25, 2.0);
  const GreenMask m = green_mask(w, seek);
  EXPECT_EQ(m.popcount(), 3u);
  for (const auto& r : partition_subvocab(12, 3)) {
    int in = 0;
    for (TokenId t = r.begin; t < r.end; ++t) in += m.contains(t);
    EXPECT_EQ(in, 1);
  }
}

TEST(GreenMask, UnigramIgnoresWindow) {
  const SchemeSpec u = make_unigram(256, 0.25, 2.0);
  const std::vector<TokenId> a{}, b{};
  EXPECT_EQ(green_mask(a, u), green_mask(b, u));
  Rng r(2);
  for (int i = 0; i < 50; ++i) {
    const auto t = static_cast<TokenId>(r.below(256));
    EXPECT_EQ(is_green(t, std::span<const TokenId>{}, u), green_mask(a, u).contains(t));
  }
}

TEST(GreenMask, KgwMinHashSpaceChangesMasks) {
  const SchemeSpec full = make_kgw_min(1024, 4, 1024, 0.25, 2.0);
  const SchemeSpec small = make_kgw_min(1024, 4, 16, 0.25, 2.0);
  Rng r(8);
  int differ = 0;
  for (int i = 0; i < 100; ++i) {
    const auto w = random_window(r, 4, 1024);
    differ += !(green_mask(w, full) == green_mask(w, small));
  }
  EXPECT_GE(differ, 95);
}

TEST(GreenMask, SeekDependsOnBucketSetOnly) {
  const SchemeSpec s = make_seek(256, 4, 4, 0.25, 2.0);
  Rng r(31);
  int checked = 0;
  for (int i = 0; i < 2000 && checked < 50; ++i) {
    const auto a = random_window(r, 4, 256);
    const auto b = random_window(r, 4, 256);
    if (signature(a, s).buckets != signature(b, s).buckets) continue;
    ++checked;
    EXPECT_EQ(green_mask(a, s), green_mask(b, s));
  }
  EXPECT_GT(checked, 10);
}

TEST(GreenMask, SeekSubGreenTracksMembership) {
  // G^j depends only on whether j is present in the window signature.
  const SchemeSpec s = make_seek(240, 3, 6, 0.25, 2.0);
  Rng r(4);
  for (int i = 0; i < 200; ++i) {
    const auto a = random_window(r, 3, 240);
    const auto b = random_window(r, 3, 240);
    const auto sa = signature(a, s), sb = signature(b, s);
    const GreenMask ma = green_mask(a, s), mb = green_mask(b, s);
    for (std::uint32_t j = 0; j < 6; ++j) {
      if (sa.contains(j + 1) != sb.contains(j + 1)) continue;
      const TokenRange range = subvocab_range(j, 240, 6);
      for (TokenId t = range.begin; t < range.end; ++t) ASSERT_EQ(ma.contains(t), mb.contains(t));
    }
  }
}

TEST(GreenMask, ForEachGreenMatchesMask) {
  for (const SchemeSpec& s :
       {make_seek(300, 3, 7, 0.3, 1.0), make_kgw_sum(300, 3, 0.3, 1.0),
        make_kgw_min(300, 3, 300, 0.3, 1.0), make_seek(300, 3, 100, 0.3, 1.0)}) {
    Rng r(12);
    for (int i = 0; i < 30; ++i) {
      const auto w = random_window(r, 3, 300);
      GreenMask m(300);
      for_each_green(w, s, [&](TokenId t) { m.insert(t); });
      ASSERT_EQ(m, green_mask(w, s));
    }
  }
}

TEST(IsGreen, AgreesWithMaskAllVariants) {
  const std::uint32_t v = 512;
  std::vector<SchemeSpec> specs{make_kgw_left(v, 0.25, 2), make_kgw_skip(v, 4, 0.25, 2),
                                make_kgw_sum(v, 4, 0.25, 2),  make_kgw_min(v, 4, 16, 0.25, 2),
                                make_unigram(v, 0.25, 2),     make_seek(v, 6, 6, 0.25, 2),
                                make_seek(v, 3, 128, 0.5, 2)};
  SchemeSpec ss = make_seek(v, 4, 6, 0.25, 2);
  ss.self_seeding = true;
  specs.push_back(ss);
  SchemeSpec prod = make_kgw_min(v, 3, 8, 0.25, 2);
  prod.cipher_mode = CipherMode::Product;
  specs.push_back(prod);
  Rng r(1);
  for (const auto& s : specs) {
    for (int i = 0; i < 10000 / static_cast<int>(specs.size()) + 1; ++i) {
      const auto w = random_window(r, s.effective_window(), v);
      const auto t = static_cast<TokenId>(r.below(v));
      ASSERT_EQ(is_green(t, w, s), green_mask(w, s).contains(t)) << s.scheme_id();
    }
  }
}

TEST(HandTrace, SeekAndKgwMin) {
  SchemeSpec seek = make_seek(8, 2, 2, 0.25, 2.0);
  SchemeSpec kmin = make_kgw_min(8, 2, 2, 0.25, 2.0);
  const std::vector<TokenId> seq{3, 5, 1, 6, 2};
  for (int i = 0; i < 5; ++i) EXPECT_EQ(hash_token(seq[i], seek.hash), golden::kTraceBuckets[i]);
  for (int p = 2; p < 5; ++p) {
    const std::span<const TokenId> w(seq.data() + p - 2, 2);
    EXPECT_EQ(is_green(seq[p], w, seek), golden::kTraceSeekHits[p - 2] == 1) << p;
    EXPECT_EQ(is_green(seq[p], w, kmin), golden::kTraceKgwMinHits[p - 2] == 1) << p;
  }
  const std::vector<TokenId> w35{3, 5};
  const GreenMask m = green_mask(w35, seek);
  EXPECT_TRUE(m.contains(golden::kTraceSeekMask35[0]));
  EXPECT_TRUE(m.contains(golden::kTraceSeekMask35[1]));
  EXPECT_EQ(m.popcount(), 2u);
}

TEST(SchemeSpec, JsonRoundTrip) {
  SchemeSpec s = make_seek(1024, 6, 6, 0.25, 5.0);
  s.self_seeding = true;
  s.cipher_mode = CipherMode::Product;
  const SchemeSpec back = scheme_from_json(scheme_to_json(s));
  EXPECT_EQ(back.variant, s.variant);
  EXPECT_EQ(back.window, 6u);
  EXPECT_EQ(back.hash.d, 6u);
  EXPECT_EQ(back.hash.key, s.hash.key);
  EXPECT_EQ(back.secret_key, s.secret_key);
  EXPECT_TRUE(back.self_seeding);
  EXPECT_EQ(back.cipher_mode, CipherMode::Product);
  EXPECT_EQ(scheme_to_json(back), scheme_to_json(s));
  EXPECT_EQ(s.scheme_id(), "seek-h6-d6-ss");
}

TEST(SchemeSpec, ValidationNamesField) {
  auto expect_msg = [](const std::string& json, const std::string& needle) {
    try {
      scheme_from_json(json);
      FAIL() << "no error for " << json;
    } catch (const ValidationError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  expect_msg(R"({"variant":"seek","gamma":1.5})", "gamma");
  expect_msg(R"({"variant":"seek","hash_space":2048,"vocab_size":1024})", "hash_space");
  expect_msg(R"({"variant":"kgw-min","window_size":0})", "window_size");
  expect_msg(R"({"variant":"seek","secret_key":0})", "secret_key");
  expect_msg(R"({"variant":"nope"})", "variant");
  expect_msg(R"({"gamma":0.25})", "variant");
  expect_msg(R"({"variant":"seek","gamma":"x"})", "type");
}

TEST(SchemeSpec, EffectiveWindow) {
  SchemeSpec s = make_kgw_min(64, 4, 8, 0.25, 2.0);
  EXPECT_EQ(s.effective_window(), 4u);
  s.self_seeding = true;
  EXPECT_EQ(s.effective_window(), 5u);
  SchemeSpec u = make_unigram(64, 0.25, 2.0);
  u.self_seeding = true;
  EXPECT_EQ(u.effective_window(), 0u);
}
