#pragma once

// Watermark detection: per-token scoring, the one-proportion z-test, WinMax,
// threshold calibration and ROC summaries.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "seekmark/primitives.hpp"
#include "seekmark/schemes.hpp"

namespace seekmark {

struct HitVector {
  std::vector<std::uint8_t> hits;
  /// Positions after the prompt that lacked a full window and were skipped.
  std::uint32_t skipped_prefix = 0;

  std::uint32_t size() const noexcept { return static_cast<std::uint32_t>(hits.size()); }
  std::uint32_t green_count() const noexcept;
};

/// Scores every position from prompt_len on that has a full window in front
/// of it (prompt tokens serve as context). With dedup, repeated
/// (window, token) pairs are scored once. Throws "sequence too short" when
/// nothing is scoreable.
HitVector score(std::span<const TokenId> seq, std::uint32_t prompt_len, const SchemeSpec& spec,
                bool dedup = false);

/// (g - gamma T) / sqrt(T gamma (1 - gamma)).
double z_score(std::uint64_t green_count, std::uint64_t t_scored, double gamma);

/// Upper tail 1 - Phi(z) = erfc(z / sqrt 2) / 2.
double p_value(double z) noexcept;

inline constexpr std::uint32_t kDefaultWinMaxMinLen = 20;

struct WinMaxResult {
  double z = 0.0;
  /// Half-open span [start, end) of the hit vector.
  std::uint32_t start = 0;
  std::uint32_t end = 0;
};

/// Max over spans with end - start >= min_len of the span z-score. Ties go to
/// the lexicographically smallest (start, end). Integer sliding counts per
/// span length; bitwise identical to winmax_bruteforce.
WinMaxResult winmax(std::span<const std::uint8_t> hits, double gamma,
                    std::uint32_t min_len = kDefaultWinMaxMinLen);
/// O(T^2) reference over prefix sums.
WinMaxResult winmax_bruteforce(std::span<const std::uint8_t> hits, double gamma,
                               std::uint32_t min_len = kDefaultWinMaxMinLen);

struct CalibrationResult {
  double threshold = 0.0;
  double target_fpr = 0.0;
  double achieved_fpr = 0.0;
  std::uint32_t n_null = 0;
  /// Set when n_null < 1 / target_fpr.
  bool undersized = false;
};

/// Smallest observed score t such that the rule score >= t flags at most
/// floor(target_fpr * n) null scores. When no observed score qualifies the
/// threshold sits just above the maximum.
CalibrationResult calibrate(std::span<const double> null_scores, double target_fpr);

/// Fraction of scores >= threshold.
double flag_rate(std::span<const double> scores, double threshold);

struct RocMetrics {
  double auroc = 0.0;
  /// fpr -> tpr at thresholds calibrated on the negatives.
  std::map<double, double> tp_at;
  std::map<double, double> thresholds;
};

inline constexpr double kDefaultFprsData[] = {0.01, 0.05};
inline constexpr std::span<const double> kDefaultFprs = kDefaultFprsData;

/// Mann-Whitney AUROC (ties count one half) and TP@f for each f in fprs.
RocMetrics roc_metrics(std::span<const double> pos, std::span<const double> neg,
                       std::span<const double> fprs = kDefaultFprs);

struct RocPoint {
  double threshold;
  double fpr;
  double tpr;
};
/// ROC curve at every distinct score, descending threshold.
std::vector<RocPoint> roc_curve(std::span<const double> pos, std::span<const double> neg);

struct DetectionReport {
  std::uint32_t t_scored = 0;
  std::uint32_t green_count = 0;
  std::uint32_t skipped_prefix = 0;
  double z = 0.0;
  double p_value = 1.0;
  double winmax_z = 0.0;
  std::uint32_t winmax_start = 0;
  std::uint32_t winmax_end = 0;
};

/// score + z + WinMax. min_len is clamped to the number of scored positions.
DetectionReport detect(std::span<const TokenId> seq, std::uint32_t prompt_len,
                       const SchemeSpec& spec, std::uint32_t min_len = kDefaultWinMaxMinLen,
                       bool dedup = false);

std::string detection_report_to_json(const DetectionReport& r);

}  // namespace seekmark
