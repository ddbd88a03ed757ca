#pragma once
// Generated by tests/oracles/golden.py. Do not edit by hand.

#include <cstdint>

namespace golden {

inline constexpr std::uint64_t kMix64Of0 = 0x0000000000000000ULL;
inline constexpr std::uint64_t kMix64Of1 = 0x5692161d100b05e5ULL;
inline constexpr std::uint32_t kHashT0D2e20 = 552233;
inline constexpr std::uint32_t kHashT1D2e20 = 813244;
inline constexpr std::uint64_t kRngSeed1[3] = {0xb3f2af6d0fc710c5ULL, 0x853b559647364ceaULL, 0x92f89756082a4514ULL};
inline constexpr std::uint64_t kRngSeed42Below1000[4] = {83, 378, 680, 924};
inline constexpr std::uint64_t kChildSeedPrompt7 = 0xb9ae38db6a74b52cULL;
inline constexpr std::uint64_t kCipher1 = 0xeb8e2cc54e7efd98ULL;
inline constexpr std::uint32_t kSelect_c1_10_4[4] = {4, 8, 7, 1};

// |V|=8, d=2, h=2, gamma=0.25, tokens {3,5,1,6,2}, prompt 2
inline constexpr std::uint32_t kTraceBuckets[5] = {1, 1, 2, 1, 2};
inline constexpr std::uint8_t kTraceSeekHits[3] = {1, 0, 0};
inline constexpr std::uint8_t kTraceKgwMinHits[3] = {0, 1, 0};
inline constexpr std::uint32_t kTraceSeekMask35[2] = {1, 5};

inline constexpr double kCollision_h5_d365 = 0.027135573699793591;
inline constexpr double kCollisionBound_h2_d2 = 0.39346934028736658;
inline constexpr double kEquivKeys_h2_d2 = 1.5;
inline constexpr double kEquivKeys_h4_d5 = 1.4399999999999999;
inline constexpr double kKgwPmf_x1_phi05_h4_g025 = 0.112060546875;
inline constexpr double kSeekPmf_x1_h6_d6_g025 = 0.40189373262941874;
inline constexpr double kKgwAggregate_x1_h4_g025_v64 = 0.29729314284816155;
inline constexpr double kExpectKgwAgg_h6_g025_v1024 = 1.7033992700663201;
inline constexpr double kExpectSeek_h6_d6_g025 = 0.57297335641830571;

inline constexpr double kZ_50of100 = 5.7735026918962573;
inline constexpr double kZ_100of100 = 17.320508075688771;
inline constexpr double kPValue_z390 = 4.8096344017602736e-05;
inline constexpr double kPValue_z8 = 6.2209605742717839e-16;
inline constexpr double kWinMax_block = 12.24744871391589;
inline constexpr std::uint32_t kWinMax_block_span[2] = {50, 100};
inline constexpr double kAuroc_example = 0.75;
inline constexpr double kDistinct_pool8_count2 = 0.9642857142857143;

}  // namespace golden
