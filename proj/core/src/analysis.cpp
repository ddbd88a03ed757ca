#include "seekmark/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "seekmark/error.hpp"
#include "seekmark/parallel.hpp"
#include "seekmark/random.hpp"

namespace seekmark {

namespace {

class KahanSum {
 public:
  void add(double v) noexcept {
    const double y = v - c_;
    const double t = s_ + y;
    c_ = (t - s_) - y;
    s_ = t;
  }
  double value() const noexcept { return s_; }

 private:
  double s_ = 0.0;
  double c_ = 0.0;
};

double binom(std::uint32_t n, std::uint32_t k) {
  double r = 1.0;
  for (std::uint32_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

void check_x(std::uint32_t x) {
  if (x == 0) throw ValidationError("formula defined for x >= 1; x=0 mass is the residual");
}

void check_gamma(double gamma) {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ValidationError("gamma must lie in (0, 1]");
}

// Shared double sum: sum_{i=x}^h sum_{k=x}^i a^{i-k} b^{k+h-1} C(k,x) q^x (1-q)^{k-x}.
double removal_double_sum(std::uint32_t x, std::uint32_t h, double a, double b, double q) {
  double total = 0.0;
  for (std::uint32_t i = x; i <= h; ++i)
    for (std::uint32_t k = x; k <= i; ++k)
      total += std::pow(a, i - k) * std::pow(b, k + h - 1) * binom(k, x) * std::pow(q, x) *
               std::pow(1.0 - q, k - x);
  return total;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

}  // namespace

double collision_prob_exact(std::uint32_t h, std::uint32_t d) {
  if (h < 1 || d < 1) throw ValidationError("collision_prob: h and d must be at least 1");
  if (h > d) return 1.0;
  double none = 1.0;
  for (std::uint32_t i = 0; i < h; ++i) none *= 1.0 - static_cast<double>(i) / d;
  return 1.0 - none;
}

double collision_prob_bound(std::uint32_t h, std::uint32_t d) {
  if (h < 1 || d < 1) throw ValidationError("collision_prob: h and d must be at least 1");
  return -std::expm1(-static_cast<double>(h) * (h - 1) / (2.0 * d));
}

double expected_equivalent_keys(std::uint32_t h, std::uint32_t d) {
  if (h < 1 || d < 1) throw ValidationError("expected_equivalent_keys: h, d must be >= 1");
  double total = 0.0;
  for (std::uint32_t m = 1; m <= d; ++m)
    total += (static_cast<double>(h) / d) *
             std::pow(static_cast<double>(d - m + 1) / d, static_cast<double>(h - 1));
  return total;
}

double kgw_removal_pmf(std::uint32_t x, double phi, std::uint32_t h, double gamma) {
  check_x(x);
  check_gamma(gamma);
  if (!(phi >= 0.0 && phi <= 1.0)) throw ValidationError("phi must lie in [0, 1]");
  if (x > h) return 0.0;
  return removal_double_sum(x, h, 1.0 - phi, phi, 1.0 - gamma);
}

double kgw_removal_aggregate_sum(std::uint32_t x, std::uint32_t h, double gamma,
                                 std::uint32_t v_size) {
  check_x(x);
  check_gamma(gamma);
  if (v_size < 1) throw ValidationError("v_size must be at least 1");
  KahanSum sum;
  for (std::uint32_t v = 1; v <= v_size; ++v)
    sum.add(kgw_removal_pmf(x, static_cast<double>(v) / v_size, h, gamma));
  return sum.value();
}

double kgw_removal_aggregate(std::uint32_t x, std::uint32_t h, double gamma,
                             std::uint32_t v_size) {
  return kgw_removal_aggregate_sum(x, h, gamma, v_size) / v_size;
}

double seek_removal_pmf(std::uint32_t x, std::uint32_t h, std::uint32_t d, double gamma) {
  check_x(x);
  check_gamma(gamma);
  if (d < 1) throw ValidationError("d must be at least 1");
  if (x > h) return 0.0;
  const double inv = 1.0 / d;
  return removal_double_sum(x, h, inv, 1.0 - inv, (1.0 - gamma) * inv);
}

double RemovalPmf::expectation() const noexcept {
  double e = 0.0;
  for (std::size_t x = 1; x < probs.size(); ++x) e += static_cast<double>(x) * probs[x];
  return e;
}

namespace {

template <class F>
RemovalPmf distribution(std::uint32_t h, F&& pmf) {
  RemovalPmf out;
  out.probs.assign(h + 1, 0.0);
  double mass = 0.0;
  for (std::uint32_t x = 1; x <= h; ++x) {
    out.probs[x] = pmf(x);
    mass += out.probs[x];
  }
  out.probs[0] = 1.0 - mass;
  return out;
}

}  // namespace

RemovalPmf kgw_removal_distribution(double phi, std::uint32_t h, double gamma) {
  return distribution(h, [&](std::uint32_t x) { return kgw_removal_pmf(x, phi, h, gamma); });
}

RemovalPmf kgw_aggregate_distribution(std::uint32_t h, double gamma, std::uint32_t v_size) {
  return distribution(h,
                      [&](std::uint32_t x) { return kgw_removal_aggregate(x, h, gamma, v_size); });
}

RemovalPmf seek_removal_distribution(std::uint32_t h, std::uint32_t d, double gamma) {
  return distribution(h, [&](std::uint32_t x) { return seek_removal_pmf(x, h, d, gamma); });
}

namespace {

struct Moments {
  std::uint64_t sum = 0;
  std::uint64_t sum_sq = 0;

  void add(std::uint64_t v) noexcept {
    sum += v;
    sum_sq += v * v;
  }
  Moments& operator+=(const Moments& o) noexcept {
    sum += o.sum;
    sum_sq += o.sum_sq;
    return *this;
  }
  McEstimate estimate(std::uint64_t n) const {
    McEstimate e;
    e.trials = n;
    if (n == 0) return e;
    const double dn = static_cast<double>(n);
    e.mean = static_cast<double>(sum) / dn;
    if (n > 1) {
      const double var = (static_cast<double>(sum_sq) - dn * e.mean * e.mean) / (dn - 1.0);
      e.std_err = std::sqrt(std::max(var, 0.0) / dn);
    }
    return e;
  }
};

// Runs shard(rng, count, moments) over kMcShard-sized shards and merges the
// per-shard moments in shard order.
template <class Shard>
std::vector<Moments> run_sharded(std::uint64_t trials, std::uint64_t seed, const char* name,
                                 std::size_t slots, unsigned workers, Shard&& shard) {
  if (trials == 0) throw ValidationError("trials must be at least 1");
  const std::uint64_t shards = (trials + kMcShard - 1) / kMcShard;
  std::vector<std::vector<Moments>> parts(shards, std::vector<Moments>(slots));
  parallel_for(shards, workers, [&](std::size_t s) {
    Rng rng(child_seed(seed, name, s));
    const std::uint64_t n = std::min<std::uint64_t>(kMcShard, trials - s * kMcShard);
    shard(rng, n, parts[s]);
  });
  std::vector<Moments> total(slots);
  for (const auto& p : parts)
    for (std::size_t i = 0; i < slots; ++i) total[i] += p[i];
  return total;
}

// Bernoulli(p) from one 53-bit uniform.
inline bool coin(Rng& rng, double p) noexcept { return rng.uniform() < p; }

// Per trial, with `below` the probability that a token avoids the edited
// token's key and `removal` the probability that an affected position loses
// its watermark:
//   - h - 1 window draws must all be `below`, otherwise the trial is empty;
//   - suffix flags s_1..s_h; offset i is valid iff s_1..s_i = 1^k 0^(i-k);
//   - X_i = sum_{j<=k} r_j with r_j ~ Bernoulli(removal).
// Slot x (1..h) accumulates #{i : X_i = x}; slot 0 accumulates sum_i X_i.
template <class PhiFn>
void removal_shard(Rng& rng, std::uint64_t n, std::uint32_t h, double removal, PhiFn&& phi_fn,
                   std::vector<Moments>& out) {
  std::vector<std::uint32_t> tally(h + 1);
  std::vector<std::uint32_t> prefix(h + 1);
  for (std::uint64_t t = 0; t < n; ++t) {
    std::fill(tally.begin(), tally.end(), 0u);
    const double below = phi_fn(rng);
    bool window_ok = true;
    for (std::uint32_t j = 1; j < h && window_ok; ++j) window_ok = coin(rng, below);
    std::uint64_t sum_x = 0;
    if (window_ok) {
      std::uint32_t lead = 0;
      while (lead < h && coin(rng, below)) ++lead;
      // First `below` flag after the leading run ends the valid offsets.
      std::uint32_t stop = h + 1;
      for (std::uint32_t j = lead + 2; j <= h; ++j)
        if (coin(rng, below)) {
          stop = j;
          break;
        }
      prefix[0] = 0;
      for (std::uint32_t j = 1; j <= lead; ++j) prefix[j] = prefix[j - 1] + coin(rng, removal);
      for (std::uint32_t i = 1; i <= lead; ++i) {
        ++tally[prefix[i]];
        sum_x += prefix[i];
      }
      const std::uint32_t tail = lead < h ? stop - 1 - lead : 0;
      tally[prefix[lead]] += tail;
      sum_x += static_cast<std::uint64_t>(tail) * prefix[lead];
    }
    out[0].add(sum_x);
    for (std::uint32_t x = 1; x <= h; ++x) out[x].add(tally[x]);
  }
}

RemovalMc to_removal_mc(const std::vector<Moments>& m, std::uint64_t trials, std::uint32_t h) {
  RemovalMc r;
  r.expectation = m[0].estimate(trials);
  r.pmf.resize(h + 1);
  for (std::uint32_t x = 1; x <= h; ++x) r.pmf[x] = m[x].estimate(trials);
  return r;
}

void check_mc_args(std::uint32_t h, double gamma) {
  if (h < 1) throw ValidationError("h must be at least 1");
  check_gamma(gamma);
}

}  // namespace

McEstimate mc_collision(std::uint32_t h, std::uint32_t d, std::uint64_t trials,
                        std::uint64_t seed, unsigned workers) {
  if (h < 1 || d < 1) throw ValidationError("mc_collision: h and d must be at least 1");
  auto m = run_sharded(trials, seed, "mc-collision", 1, workers,
                       [&](Rng& rng, std::uint64_t n, std::vector<Moments>& out) {
                         std::vector<std::uint32_t> stamp(d, 0);
                         std::uint32_t epoch = 0;
                         for (std::uint64_t t = 0; t < n; ++t) {
                           ++epoch;
                           bool hit = false;
                           for (std::uint32_t j = 0; j < h; ++j) {
                             const auto b = static_cast<std::uint32_t>(rng.below(d));
                             if (stamp[b] == epoch) hit = true;
                             stamp[b] = epoch;
                           }
                           out[0].add(hit ? 1 : 0);
                         }
                       });
  return m[0].estimate(trials);
}

McEstimate mc_equivalent_keys(std::uint32_t h, std::uint32_t d, std::uint64_t trials,
                              std::uint64_t seed, unsigned workers) {
  if (h < 1 || d < 1) throw ValidationError("mc_equivalent_keys: h and d must be at least 1");
  auto m = run_sharded(trials, seed, "mc-equivalent-keys", 1, workers,
                       [&](Rng& rng, std::uint64_t n, std::vector<Moments>& out) {
                         for (std::uint64_t t = 0; t < n; ++t) {
                           std::uint64_t best = d;
                           std::uint64_t mult = 0;
                           for (std::uint32_t j = 0; j < h; ++j) {
                             const std::uint64_t b = rng.below(d);
                             if (b < best) {
                               best = b;
                               mult = 1;
                             } else if (b == best) {
                               ++mult;
                             }
                           }
                           out[0].add(mult);
                         }
                       });
  return m[0].estimate(trials);
}

RemovalMc mc_removal_kgw(double phi, std::uint32_t h, double gamma, std::uint64_t trials,
                         std::uint64_t seed, unsigned workers) {
  check_mc_args(h, gamma);
  if (!(phi >= 0.0 && phi <= 1.0)) throw ValidationError("phi must lie in [0, 1]");
  auto m = run_sharded(trials, seed, "mc-removal-kgw", h + 1, workers,
                       [&](Rng& rng, std::uint64_t n, std::vector<Moments>& out) {
                         removal_shard(rng, n, h, 1.0 - gamma, [&](Rng&) { return phi; }, out);
                       });
  return to_removal_mc(m, trials, h);
}

RemovalMc mc_removal_kgw_aggregate(std::uint32_t h, double gamma, std::uint32_t v_size,
                                   std::uint64_t trials, std::uint64_t seed, unsigned workers) {
  check_mc_args(h, gamma);
  if (v_size < 1) throw ValidationError("v_size must be at least 1");
  auto m = run_sharded(trials, seed, "mc-removal-kgw-aggregate", h + 1, workers,
                       [&](Rng& rng, std::uint64_t n, std::vector<Moments>& out) {
                         removal_shard(rng, n, h, 1.0 - gamma,
                                       [&](Rng& r) {
                                         return static_cast<double>(r.below(v_size) + 1) / v_size;
                                       },
                                       out);
                       });
  return to_removal_mc(m, trials, h);
}

RemovalMc mc_removal_seek(std::uint32_t h, std::uint32_t d, double gamma, std::uint64_t trials,
                          std::uint64_t seed, unsigned workers) {
  check_mc_args(h, gamma);
  if (d < 1) throw ValidationError("d must be at least 1");
  const double inv = 1.0 / d;
  auto m = run_sharded(trials, seed, "mc-removal-seek", h + 1, workers,
                       [&](Rng& rng, std::uint64_t n, std::vector<Moments>& out) {
                         removal_shard(rng, n, h, (1.0 - gamma) * inv,
                                       [&](Rng&) { return 1.0 - inv; }, out);
                       });
  return to_removal_mc(m, trials, h);
}

PropositionReport make_report(std::string proposition, std::string params, double closed_form,
                              const McEstimate& mc) {
  PropositionReport r;
  r.proposition = std::move(proposition);
  r.params = std::move(params);
  r.closed_form = closed_form;
  r.monte_carlo = mc.mean;
  r.mc_std_err = mc.std_err;
  r.trials = mc.trials;
  double floor = 0.0;
  if (mc.trials > 0) {
    const double n = static_cast<double>(mc.trials);
    floor = std::max(1.0 / n, std::sqrt(std::max(0.0, closed_form * (1.0 - closed_form)) / n));
  }
  r.agrees = std::abs(closed_form - mc.mean) <= 4.0 * std::max(mc.std_err, floor);
  r.holds = r.agrees;
  return r;
}

namespace {

PropositionReport ordering_report(std::uint32_t h, std::uint32_t d, double gamma,
                                  std::uint32_t v_size, const RemovalMc* kgw_mc,
                                  const RemovalMc* seek_mc) {
  const double e_hat = kgw_aggregate_distribution(h, gamma, v_size).expectation();
  const double e = seek_removal_distribution(h, d, gamma).expectation();
  McEstimate diff;
  if (kgw_mc != nullptr && seek_mc != nullptr) {
    diff.mean = kgw_mc->expectation.mean - seek_mc->expectation.mean;
    diff.std_err = std::hypot(kgw_mc->expectation.std_err, seek_mc->expectation.std_err);
    diff.trials = std::min(kgw_mc->expectation.trials, seek_mc->expectation.trials);
  }
  PropositionReport r = make_report(
      "prop5", fmt("h=%g d=%g gamma=%g V=%g", h, d, gamma, v_size), e_hat - e, diff);
  if (diff.trials == 0) r.agrees = true;
  r.holds = e_hat > e;
  if (gamma < 1.0 / (d + 1.0)) r.note = "gamma below 1/(d+1)";
  return r;
}

}  // namespace

PropositionReport expectation_ordering_check(std::uint32_t h, std::uint32_t d, double gamma,
                                             std::uint32_t v_size, std::uint64_t trials,
                                             std::uint64_t seed) {
  if (trials == 0) return ordering_report(h, d, gamma, v_size, nullptr, nullptr);
  const RemovalMc k = mc_removal_kgw_aggregate(h, gamma, v_size, trials, seed);
  const RemovalMc s = mc_removal_seek(h, d, gamma, trials, seed);
  return ordering_report(h, d, gamma, v_size, &k, &s);
}

std::vector<PropositionReport> verify_props(const VerifyGrid& grid, unsigned workers) {
  struct Task {
    int kind;  // 0: prop 1+2, 1: prop 3 + 4 at (h, d, gamma), 2: aggregate at (h, gamma)
    std::uint32_t h, d;
    double gamma;
  };
  std::vector<Task> tasks;
  for (std::uint32_t h : grid.hs)
    for (std::uint32_t d : grid.ds) tasks.push_back({0, h, d, 0.0});
  for (std::uint32_t h : grid.hs)
    for (double g : grid.gammas) {
      tasks.push_back({2, h, 0, g});
      for (std::uint32_t d : grid.ds) tasks.push_back({1, h, d, g});
    }

  std::vector<std::vector<PropositionReport>> rows(tasks.size());
  std::vector<RemovalMc> agg(tasks.size()), seek(tasks.size());
  const std::uint64_t n = grid.trials;
  parallel_for(tasks.size(), workers, [&](std::size_t i) {
    const Task& t = tasks[i];
    auto& out = rows[i];
    const std::uint64_t seed = child_seed(grid.seed, "verify-props", i);
    if (t.kind == 0) {
      out.push_back(make_report("prop1", fmt("h=%g d=%g", t.h, t.d),
                                collision_prob_exact(t.h, t.d), mc_collision(t.h, t.d, n, seed)));
      PropositionReport b = make_report("prop1-bound", fmt("h=%g d=%g", t.h, t.d),
                                        collision_prob_bound(t.h, t.d), McEstimate{});
      b.monte_carlo = collision_prob_exact(t.h, t.d);
      b.agrees = b.holds = b.closed_form <= b.monte_carlo;
      b.note = "monte_carlo column holds the exact value";
      out.push_back(b);
      out.push_back(make_report("prop2", fmt("h=%g d=%g", t.h, t.d),
                                expected_equivalent_keys(t.h, t.d),
                                mc_equivalent_keys(t.h, t.d, n, seed)));
    } else if (t.kind == 1) {
      const double phi = 1.0 - 1.0 / t.d;
      const RemovalMc k = mc_removal_kgw(phi, t.h, t.gamma, n, seed);
      seek[i] = mc_removal_seek(t.h, t.d, t.gamma, n, child_seed(seed, "seek", 0));
      for (std::uint32_t x = 1; x <= t.h; ++x) {
        out.push_back(make_report("prop3",
                                  fmt("x=%g h=%g phi=%.6g gamma=%g", x, t.h, phi, t.gamma),
                                  kgw_removal_pmf(x, phi, t.h, t.gamma), k.pmf[x]));
        out.push_back(make_report("prop4", fmt("x=%g h=%g d=%g gamma=%g", x, t.h, t.d, t.gamma),
                                  seek_removal_pmf(x, t.h, t.d, t.gamma), seek[i].pmf[x]));
      }
    } else {
      agg[i] = mc_removal_kgw_aggregate(t.h, t.gamma, grid.v_size, n, seed);
      for (std::uint32_t x = 1; x <= t.h; ++x)
        out.push_back(make_report(
            "prop3-aggregate", fmt("x=%g h=%g gamma=%g V=%g", x, t.h, t.gamma, grid.v_size),
            kgw_removal_aggregate(x, t.h, t.gamma, grid.v_size), agg[i].pmf[x]));
    }
  });

  std::vector<PropositionReport> out;
  for (auto& r : rows) out.insert(out.end(), r.begin(), r.end());
  // prop5 pairs each SEEK point with the aggregate of the same (h, gamma).
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const Task& t = tasks[i];
    if (t.kind != 1 || t.d < 2) continue;
    std::size_t a = i;
    while (tasks[a].kind != 2) --a;
    out.push_back(ordering_report(t.h, t.d, t.gamma, grid.v_size, &agg[a], &seek[i]));
  }
  return out;
}

std::string proposition_csv_header() {
  return "proposition,params,closed_form,monte_carlo,std_err,trials,agrees,holds,note";
}

std::string proposition_csv_row(const PropositionReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%s,%s,%.17g,%.17g,%.17g,%llu,%s,%s,%s", r.proposition.c_str(),
                r.params.c_str(), r.closed_form, r.monte_carlo, r.mc_std_err,
                static_cast<unsigned long long>(r.trials), r.agrees ? "true" : "false",
                r.holds ? "true" : "false", r.note.c_str());
  return buf;
}

double log_diversity(std::span<const TokenId> seq) {
  if (seq.size() < 4) throw ValidationError("log_diversity: sequence shorter than 4 tokens");
  double d = 1.0;
  for (std::size_t n = 2; n <= 4; ++n) {
    std::set<std::vector<TokenId>> unique;
    const std::size_t total = seq.size() - n + 1;
    for (std::size_t i = 0; i < total; ++i)
      unique.emplace(seq.begin() + static_cast<std::ptrdiff_t>(i),
                     seq.begin() + static_cast<std::ptrdiff_t>(i + n));
    d *= static_cast<double>(unique.size()) / static_cast<double>(total);
  }
  return -std::log(1.0 - d + kDiversityEpsilon);
}

double toy_perplexity(const ToyModel& model, std::span<const TokenId> seq, std::uint32_t start) {
  if (seq.size() < 2) throw ValidationError("toy_perplexity: sequence shorter than 2 tokens");
  start = std::max(start, 1u);
  if (start >= seq.size()) throw ValidationError("toy_perplexity: nothing to score");
  double nll = 0.0;
  for (std::size_t k = start; k < seq.size(); ++k) {
    if (seq[k] >= model.vocab_size() || seq[k - 1] >= model.vocab_size())
      throw ValidationError("toy_perplexity: token id outside vocabulary");
    nll -= std::log(model.probability(seq[k - 1], seq[k]));
  }
  return std::exp(nll / static_cast<double>(seq.size() - start));
}

double toy_entropy_rate(const ToyModel& model) {
  const std::uint32_t v = model.vocab_size();
  std::vector<double> pi(v, 1.0 / v), next(v);
  for (int iter = 0; iter < 200; ++iter) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::uint32_t a = 0; a < v; ++a)
      for (std::uint32_t b = 0; b < v; ++b) next[b] += pi[a] * model.probability(a, b);
    pi.swap(next);
  }
  double rate = 0.0;
  for (std::uint32_t a = 0; a < v; ++a) {
    double h = 0.0;
    for (std::uint32_t b = 0; b < v; ++b) {
      const double p = model.probability(a, b);
      if (p > 0.0) h -= p * std::log(p);
    }
    rate += pi[a] * h;
  }
  return rate;
}

}  // namespace seekmark
