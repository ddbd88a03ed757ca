#pragma once

// Closed forms of the robustness propositions, their Monte Carlo oracles and
// text-quality metrics.
//
// Removal PMFs are defined for x >= 1; the mass at x = 0 is the residual.
// The Monte Carlo removal oracles simulate the event structure behind
// the closed forms: a window of h - 1 tokens that must all avoid the edited token's
// key, a suffix of h tokens scanned for the sliding offset i and the count k
// of key-avoiding tokens, and an independent removal draw for each of those k.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "seekmark/primitives.hpp"
#include "seekmark/textgen.hpp"

namespace seekmark {

double collision_prob_exact(std::uint32_t h, std::uint32_t d);
double collision_prob_bound(std::uint32_t h, std::uint32_t d);
double expected_equivalent_keys(std::uint32_t h, std::uint32_t d);

/// Conditional KGW-Min removal probability P(X = x | phi).
double kgw_removal_pmf(std::uint32_t x, double phi, std::uint32_t h, double gamma);
/// Mean over v = 1..|V| of P(X = x | phi = v / |V|) (integral-normalized form).
double kgw_removal_aggregate(std::uint32_t x, std::uint32_t h, double gamma,
                             std::uint32_t v_size);
/// The same triple sum without the 1 / |V| normalization.
double kgw_removal_aggregate_sum(std::uint32_t x, std::uint32_t h, double gamma,
                                 std::uint32_t v_size);
double seek_removal_pmf(std::uint32_t x, std::uint32_t h, std::uint32_t d, double gamma);

struct RemovalPmf {
  /// probs[x] for x = 0..h; probs[0] is the residual 1 - sum_{x>=1}.
  std::vector<double> probs;
  double expectation() const noexcept;
};

RemovalPmf kgw_removal_distribution(double phi, std::uint32_t h, double gamma);
RemovalPmf kgw_aggregate_distribution(std::uint32_t h, double gamma, std::uint32_t v_size);
RemovalPmf seek_removal_distribution(std::uint32_t h, std::uint32_t d, double gamma);

struct McEstimate {
  double mean = 0.0;
  double std_err = 0.0;
  std::uint64_t trials = 0;
};

inline constexpr std::uint64_t kMcShard = 1u << 16;

/// Monte Carlo runs are split into shards of kMcShard trials seeded by
/// child_seed(seed, name, shard); sums are integers, so results do not
/// depend on `workers`.
McEstimate mc_collision(std::uint32_t h, std::uint32_t d, std::uint64_t trials,
                        std::uint64_t seed, unsigned workers = 1);
McEstimate mc_equivalent_keys(std::uint32_t h, std::uint32_t d, std::uint64_t trials,
                              std::uint64_t seed, unsigned workers = 1);

struct RemovalMc {
  /// pmf[x] for x = 1..h (pmf[0] unused).
  std::vector<McEstimate> pmf;
  McEstimate expectation;
};

RemovalMc mc_removal_kgw(double phi, std::uint32_t h, double gamma, std::uint64_t trials,
                         std::uint64_t seed, unsigned workers = 1);
/// phi drawn per trial as v / |V| with v uniform in 1..|V|.
RemovalMc mc_removal_kgw_aggregate(std::uint32_t h, double gamma, std::uint32_t v_size,
                                   std::uint64_t trials, std::uint64_t seed,
                                   unsigned workers = 1);
RemovalMc mc_removal_seek(std::uint32_t h, std::uint32_t d, double gamma, std::uint64_t trials,
                          std::uint64_t seed, unsigned workers = 1);

struct PropositionReport {
  std::string proposition;
  std::string params;
  double closed_form = 0.0;
  double monte_carlo = 0.0;
  double mc_std_err = 0.0;
  std::uint64_t trials = 0;
  /// |closed_form - monte_carlo| <= 4 max(std_err, s0, 1 / trials) where
  /// s0 = sqrt(cf (1 - cf) / trials) is the least standard error of any
  /// integer-valued per-trial tally with mean cf (Y^2 >= Y). It keeps rare
  /// events with a handful of hits from being judged on their own noise.
  bool agrees = false;
  /// Ordering checks: closed_form > 0. Otherwise equals agrees.
  bool holds = false;
  std::string note;
};

PropositionReport make_report(std::string proposition, std::string params, double closed_form,
                              const McEstimate& mc);

/// closed_form = E_hat - E (KGW-Min aggregate minus SEEK expectation);
/// monte_carlo is the difference of the two oracle expectations.
PropositionReport expectation_ordering_check(std::uint32_t h, std::uint32_t d, double gamma,
                                             std::uint32_t v_size, std::uint64_t trials = 0,
                                             std::uint64_t seed = 1);

struct VerifyGrid {
  std::vector<std::uint32_t> hs{1, 2, 3, 4, 5, 6, 7, 8};
  std::vector<std::uint32_t> ds{1, 2, 4, 8, 16, 32, 64};
  std::vector<double> gammas{0.1, 0.25, 0.5};
  std::uint32_t v_size = 1024;
  std::uint64_t trials = 1000000;
  std::uint64_t seed = 1;
};

/// One report per (proposition, parameter point): prop1 and prop2 per (h, d);
/// prop3 at phi = 1 - 1/d and prop4 per (h, d, gamma, x); prop3-aggregate
/// per (h, gamma, x); prop5 per (h, d, gamma) with d >= 2.
std::vector<PropositionReport> verify_props(const VerifyGrid& grid, unsigned workers = 1);

std::string proposition_csv_header();
std::string proposition_csv_row(const PropositionReport& r);

inline constexpr double kDiversityEpsilon = 1e-9;

/// D = prod_{n=2..4} unique n-grams / total n-grams; returns -log(1 - D + eps).
double log_diversity(std::span<const TokenId> seq);
/// exp of the mean negative log-likelihood of tokens start.. under the
/// model's unbiased sampling distribution.
double toy_perplexity(const ToyModel& model, std::span<const TokenId> seq,
                      std::uint32_t start = 1);
/// Entropy rate of the model's sampling chain, in nats per token, weighted by
/// its stationary distribution (power iteration).
double toy_entropy_rate(const ToyModel& model);

}  // namespace seekmark
