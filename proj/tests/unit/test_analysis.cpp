#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "golden_values.hpp"
#include "seekmark/analysis.hpp"
#include "seekmark/error.hpp"

using namespace seekmark;

namespace {

bool within4(double cf, const McEstimate& mc) {
  const double n = static_cast<double>(mc.trials);
  const double s0 = std::sqrt(std::max(0.0, cf * (1 - cf)) / n);
  return std::abs(cf - mc.mean) <= 4 * std::max({mc.std_err, s0, 1.0 / n});
}

}  // namespace

TEST(Collision, Examples) {
  for (std::uint32_t d : {1u, 5u, 100u}) {
    EXPECT_EQ(collision_prob_exact(1, d), 0.0);
    EXPECT_EQ(collision_prob_bound(1, d), 0.0);
  }
  EXPECT_DOUBLE_EQ(collision_prob_exact(2, 2), 0.5);
  EXPECT_NEAR(collision_prob_bound(2, 2), golden::kCollisionBound_h2_d2, 1e-15);
  EXPECT_NEAR(collision_prob_exact(5, 365), golden::kCollision_h5_d365, 1e-15);
  EXPECT_TRUE(within4(collision_prob_exact(5, 365), mc_collision(5, 365, 1000000, 1)));
}

TEST(Collision, BoundBelowExact) {
  for (std::uint32_t h = 1; h <= 12; ++h)
    for (std::uint32_t d = 1; d <= 128; d *= 2)
      EXPECT_LE(collision_prob_bound(h, d), collision_prob_exact(h, d) + 1e-15);
}

TEST(EquivalentKeys, Examples) {
  for (std::uint32_t h = 1; h <= 6; ++h) EXPECT_DOUBLE_EQ(expected_equivalent_keys(h, 1), h);
  for (std::uint32_t d = 1; d <= 64; ++d) EXPECT_NEAR(expected_equivalent_keys(1, d), 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(expected_equivalent_keys(2, 2), golden::kEquivKeys_h2_d2);
  EXPECT_NEAR(expected_equivalent_keys(4, 5), golden::kEquivKeys_h4_d5, 1e-12);
  EXPECT_TRUE(within4(1.5, mc_equivalent_keys(2, 2, 1000000, 2)));
  const McEstimate one = mc_equivalent_keys(5, 1, 1000, 3);
  EXPECT_EQ(one.mean, 5.0);
  EXPECT_EQ(one.std_err, 0.0);
}

TEST(EquivalentKeys, SweepAgreesAndDecreases) {
  for (std::uint32_t h = 1; h <= 8; ++h) {
    double prev_cf = 1e9;
    for (std::uint32_t d = 1; d <= 32; ++d) {
      const double cf = expected_equivalent_keys(h, d);
      ASSERT_TRUE(within4(cf, mc_equivalent_keys(h, d, 100000, 1000 + d))) << h << "," << d;
      if (h >= 2) ASSERT_LT(cf, prev_cf);
      prev_cf = cf;
    }
  }
}

TEST(RemovalKgw, Examples) {
  for (std::uint32_t x = 1; x <= 4; ++x) {
    EXPECT_EQ(kgw_removal_pmf(x, 0.5, 4, 1.0), 0.0);
    EXPECT_EQ(kgw_removal_pmf(x, 0.0, 4, 0.25), 0.0);
  }
  EXPECT_NEAR(kgw_removal_pmf(1, 0.5, 4, 0.25), golden::kKgwPmf_x1_phi05_h4_g025, 1e-14);
  const RemovalMc mc = mc_removal_kgw(0.5, 4, 0.25, 1000000, 5);
  EXPECT_TRUE(within4(golden::kKgwPmf_x1_phi05_h4_g025, mc.pmf[1]));
  EXPECT_THROW(kgw_removal_pmf(0, 0.5, 4, 0.25), ValidationError);
}

TEST(RemovalKgw, AggregateForms) {
  EXPECT_NEAR(kgw_removal_aggregate(1, 4, 0.25, 64), golden::kKgwAggregate_x1_h4_g025_v64, 1e-13);
  EXPECT_NEAR(kgw_removal_aggregate_sum(1, 4, 0.25, 64),
              64 * golden::kKgwAggregate_x1_h4_g025_v64, 1e-11);
  const RemovalMc mc = mc_removal_kgw_aggregate(4, 0.25, 64, 1000000, 6);
  EXPECT_TRUE(within4(golden::kKgwAggregate_x1_h4_g025_v64, mc.pmf[1]));
  const RemovalPmf d = kgw_aggregate_distribution(6, 0.25, 1024);
  double s = 0;
  for (double p : d.probs) {
    EXPECT_GE(p, 0.0);
    s += p;
  }
  EXPECT_NEAR(s, 1.0, 1e-12);
  EXPECT_NEAR(d.expectation(), golden::kExpectKgwAgg_h6_g025_v1024, 1e-10);
}

TEST(RemovalSeek, Examples) {
  for (std::uint32_t x = 1; x <= 6; ++x) {
    EXPECT_EQ(seek_removal_pmf(x, 6, 1, 0.25), 0.0);
    EXPECT_EQ(seek_removal_pmf(x, 6, 6, 1.0), 0.0);
  }
  EXPECT_NEAR(seek_removal_pmf(1, 6, 6, 0.25), golden::kSeekPmf_x1_h6_d6_g025, 1e-14);
  const RemovalMc mc = mc_removal_seek(6, 6, 0.25, 1000000, 7);
  EXPECT_TRUE(within4(golden::kSeekPmf_x1_h6_d6_g025, mc.pmf[1]));
  EXPECT_NEAR(seek_removal_distribution(6, 6, 0.25).expectation(),
              golden::kExpectSeek_h6_d6_g025, 1e-12);
}

TEST(RemovalSeek, ReducesToKgwForm) {
  // SEEK is the KGW-Min form at phi = 1 - 1/d with removal rate (1 - gamma) / d.
  for (std::uint32_t d : {2u, 6u, 16u})
    for (std::uint32_t x = 1; x <= 5; ++x) {
      const double g = 1.0 - (1.0 - 0.25) / d;
      EXPECT_NEAR(seek_removal_pmf(x, 5, d, 0.25), kgw_removal_pmf(x, 1.0 - 1.0 / d, 5, g),
                  1e-14);
    }
}

TEST(Ordering, ExpectationGapExamples) {
  const PropositionReport r = expectation_ordering_check(6, 6, 0.25, 1024);
  EXPECT_TRUE(r.holds);
  EXPECT_NEAR(r.closed_form, golden::kExpectKgwAgg_h6_g025_v1024 - golden::kExpectSeek_h6_d6_g025,
              1e-10);
  for (std::uint32_t h = 2; h <= 8; ++h)
    for (std::uint32_t d = 4; d <= 64; d *= 2)
      EXPECT_TRUE(expectation_ordering_check(h, d, 0.25, 1024).holds) << h << "," << d;
  EXPECT_EQ(kgw_aggregate_distribution(6, 1.0, 1024).expectation(), 0.0);
  EXPECT_EQ(seek_removal_distribution(6, 6, 1.0).expectation(), 0.0);
}

TEST(VerifyProps, SmallGridAgrees) {
  VerifyGrid g;
  g.hs = {1, 2, 4};
  g.ds = {1, 2, 8};
  g.gammas = {0.25};
  g.trials = 200000;
  const auto reports = verify_props(g, 2);
  EXPECT_GE(reports.size(), 40u);
  for (const auto& r : reports) EXPECT_TRUE(r.agrees) << r.proposition << " " << r.params;
  const auto again = verify_props(g, 1);
  ASSERT_EQ(again.size(), reports.size());
  for (std::size_t i = 0; i < reports.size(); ++i)
    EXPECT_EQ(again[i].monte_carlo, reports[i].monte_carlo);
  const std::string header = proposition_csv_header();
  EXPECT_NE(header.find("closed_form"), std::string::npos);
  EXPECT_NE(header.find("agrees"), std::string::npos);
}
