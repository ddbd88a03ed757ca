#include "seekmark/detect.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "json.hpp"
#include "seekmark/error.hpp"

namespace seekmark {

std::uint32_t HitVector::green_count() const noexcept {
  return static_cast<std::uint32_t>(std::count(hits.begin(), hits.end(), 1));
}

HitVector score(std::span<const TokenId> seq, std::uint32_t prompt_len, const SchemeSpec& spec,
                bool dedup) {
  spec.validate();
  if (prompt_len > seq.size()) throw ValidationError("prompt_len exceeds sequence length");
  const std::uint32_t h = spec.window;
  const bool self = spec.effective_window() > h;
  HitVector hv;
  std::set<std::vector<TokenId>> seen;
  std::vector<TokenId> key;
  for (std::size_t pos = prompt_len; pos < seq.size(); ++pos) {
    if (pos < h) {
      ++hv.skipped_prefix;
      continue;
    }
    const std::size_t end = self ? pos + 1 : pos;
    const std::span<const TokenId> window = seq.subspan(end - spec.effective_window(),
                                                        spec.effective_window());
    if (dedup) {
      key.assign(seq.begin() + (pos - h), seq.begin() + pos + 1);
      if (!seen.insert(key).second) continue;
    }
    hv.hits.push_back(is_green(seq[pos], window, spec) ? 1 : 0);
  }
  if (hv.hits.empty()) throw ValidationError("sequence too short");
  return hv;
}

double z_score(std::uint64_t green_count, std::uint64_t t_scored, double gamma) {
  if (t_scored == 0) throw ValidationError("z_score: no scored tokens");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ValidationError("z_score: gamma must lie in (0, 1)");
  const double t = static_cast<double>(t_scored);
  return (static_cast<double>(green_count) - gamma * t) / std::sqrt(t * gamma * (1.0 - gamma));
}

double p_value(double z) noexcept { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

namespace {

// Shared by both WinMax implementations so that equal spans give bitwise
// equal scores.
inline double span_z(std::uint32_t count, std::uint32_t len, double gamma) noexcept {
  const double l = static_cast<double>(len);
  return (static_cast<double>(count) - gamma * l) / std::sqrt(gamma * (1.0 - gamma) * l);
}

void check_winmax_args(std::size_t n, double gamma, std::uint32_t min_len) {
  if (min_len < 1) throw ValidationError("winmax: min_len must be at least 1");
  if (n < min_len) throw ValidationError("winmax: hit vector shorter than min_len");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ValidationError("winmax: gamma must lie in (0, 1)");
}

bool better(double z, std::uint32_t i, std::uint32_t j, const WinMaxResult& best) {
  if (z != best.z) return z > best.z;
  return i < best.start || (i == best.start && j < best.end);
}

}  // namespace

WinMaxResult winmax_bruteforce(std::span<const std::uint8_t> hits, double gamma,
                               std::uint32_t min_len) {
  check_winmax_args(hits.size(), gamma, min_len);
  const auto n = static_cast<std::uint32_t>(hits.size());
  std::vector<std::uint32_t> prefix(n + 1, 0);
  for (std::uint32_t k = 0; k < n; ++k) prefix[k + 1] = prefix[k] + (hits[k] ? 1 : 0);
  WinMaxResult best{-std::numeric_limits<double>::infinity(), 0, 0};
  for (std::uint32_t i = 0; i + min_len <= n; ++i) {
    for (std::uint32_t j = i + min_len; j <= n; ++j) {
      const double z = span_z(prefix[j] - prefix[i], j - i, gamma);
      if (z > best.z) best = {z, i, j};
    }
  }
  return best;
}

WinMaxResult winmax(std::span<const std::uint8_t> hits, double gamma, std::uint32_t min_len) {
  check_winmax_args(hits.size(), gamma, min_len);
  const auto n = static_cast<std::uint32_t>(hits.size());
  WinMaxResult best{-std::numeric_limits<double>::infinity(), 0, 0};
  std::uint32_t first = 0;
  for (std::uint32_t k = 0; k < min_len; ++k) first += hits[k] ? 1 : 0;
  for (std::uint32_t len = min_len; len <= n; ++len) {
    if (len > min_len) first += hits[len - 1] ? 1 : 0;
    // Best count among windows of this length; first occurrence wins.
    std::uint32_t count = first;
    std::uint32_t max_count = count;
    std::uint32_t arg = 0;
    for (std::uint32_t i = 1; i + len <= n; ++i) {
      count += (hits[i + len - 1] ? 1u : 0u);
      count -= (hits[i - 1] ? 1u : 0u);
      if (count > max_count) {
        max_count = count;
        arg = i;
      }
    }
    const double z = span_z(max_count, len, gamma);
    if (better(z, arg, arg + len, best)) best = {z, arg, arg + len};
  }
  return best;
}

CalibrationResult calibrate(std::span<const double> null_scores, double target_fpr) {
  if (null_scores.empty()) throw ValidationError("calibrate: empty null scores");
  if (!(target_fpr > 0.0 && target_fpr <= 1.0))
    throw ValidationError("calibrate: target_fpr must lie in (0, 1]");
  std::vector<double> s(null_scores.begin(), null_scores.end());
  std::sort(s.begin(), s.end(), std::greater<>());
  const std::size_t n = s.size();
  const auto allowed = static_cast<std::size_t>(std::floor(target_fpr * n + 1e-9));

  double threshold = std::nextafter(s.front(), std::numeric_limits<double>::infinity());
  // Walk distinct values downwards while the flagged count stays in budget.
  std::size_t idx = 0;
  while (idx < n) {
    std::size_t next = idx;
    while (next < n && s[next] == s[idx]) ++next;
    if (next > allowed) break;
    threshold = s[idx];
    idx = next;
  }
  CalibrationResult r;
  r.threshold = threshold;
  r.target_fpr = target_fpr;
  r.n_null = static_cast<std::uint32_t>(n);
  r.achieved_fpr = flag_rate(null_scores, threshold);
  r.undersized = static_cast<double>(n) * target_fpr < 1.0;
  return r;
}

double flag_rate(std::span<const double> scores, double threshold) {
  if (scores.empty()) return 0.0;
  const auto k = std::count_if(scores.begin(), scores.end(),
                               [&](double x) { return x >= threshold; });
  return static_cast<double>(k) / static_cast<double>(scores.size());
}

RocMetrics roc_metrics(std::span<const double> pos, std::span<const double> neg,
                       std::span<const double> fprs) {
  if (pos.empty() || neg.empty()) throw ValidationError("roc_metrics: empty input");
  std::vector<double> n_sorted(neg.begin(), neg.end());
  std::sort(n_sorted.begin(), n_sorted.end());
  // Sum over positives of #(neg < p) + #(neg == p) / 2, counted in halves.
  std::uint64_t halves = 0;
  for (double p : pos) {
    const auto lo = std::lower_bound(n_sorted.begin(), n_sorted.end(), p);
    const auto hi = std::upper_bound(lo, n_sorted.end(), p);
    halves += 2 * static_cast<std::uint64_t>(lo - n_sorted.begin()) +
              static_cast<std::uint64_t>(hi - lo);
  }
  RocMetrics m;
  m.auroc = static_cast<double>(halves) /
            (2.0 * static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
  for (double f : fprs) {
    const CalibrationResult c = calibrate(neg, f);
    m.thresholds[f] = c.threshold;
    m.tp_at[f] = flag_rate(pos, c.threshold);
  }
  return m;
}

std::vector<RocPoint> roc_curve(std::span<const double> pos, std::span<const double> neg) {
  if (pos.empty() || neg.empty()) throw ValidationError("roc_curve: empty input");
  std::vector<double> all(pos.begin(), pos.end());
  all.insert(all.end(), neg.begin(), neg.end());
  std::sort(all.begin(), all.end(), std::greater<>());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  std::vector<double> p(pos.begin(), pos.end());
  std::vector<double> q(neg.begin(), neg.end());
  std::sort(p.begin(), p.end());
  std::sort(q.begin(), q.end());
  const auto at_least = [](const std::vector<double>& v, double t) {
    return static_cast<double>(v.end() - std::lower_bound(v.begin(), v.end(), t)) /
           static_cast<double>(v.size());
  };
  std::vector<RocPoint> out;
  out.reserve(all.size() + 1);
  out.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  for (double t : all) out.push_back({t, at_least(q, t), at_least(p, t)});
  return out;
}

DetectionReport detect(std::span<const TokenId> seq, std::uint32_t prompt_len,
                       const SchemeSpec& spec, std::uint32_t min_len, bool dedup) {
  const HitVector hv = score(seq, prompt_len, spec, dedup);
  DetectionReport r;
  r.t_scored = hv.size();
  r.green_count = hv.green_count();
  r.skipped_prefix = hv.skipped_prefix;
  r.z = z_score(r.green_count, r.t_scored, spec.gamma);
  r.p_value = p_value(r.z);
  const WinMaxResult w = winmax(hv.hits, spec.gamma, std::min(std::max(min_len, 1u), r.t_scored));
  r.winmax_z = w.z;
  r.winmax_start = w.start;
  r.winmax_end = w.end;
  return r;
}

std::string detection_report_to_json(const DetectionReport& r) {
  nlohmann::ordered_json j;
  j["t_scored"] = r.t_scored;
  j["green_count"] = r.green_count;
  j["skipped_prefix"] = r.skipped_prefix;
  j["z"] = r.z;
  j["p_value"] = r.p_value;
  j["winmax_z"] = r.winmax_z;
  j["winmax_span"] = {r.winmax_start, r.winmax_end};
  return j.dump();
}

}  // namespace seekmark
