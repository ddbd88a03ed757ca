#include <benchmark/benchmark.h>

#include <vector>

#include "seekmark/attacks.hpp"
#include "seekmark/detect.hpp"
#include "seekmark/schemes.hpp"
#include "seekmark/textgen.hpp"

using namespace seekmark;

namespace {

const ToyModel& model() {
  static const ToyModel m = [] {
    ModelParams p;
    p.source.vocab_size = 1024;
    p.source.seed = 1;
    return build_toy_model(p);
  }();
  return m;
}

SchemeSpec scheme_for(int kind) {
  switch (kind) {
    case 0: return make_seek(1024, 6, 6, 0.25, 5.0);
    case 1: return make_kgw_min(1024, 4, 1024, 0.25, 5.0);
    default: return make_unigram(1024, 0.25, 5.0);
  }
}

void BM_Generate(benchmark::State& state) {
  const SchemeSpec s = scheme_for(static_cast<int>(state.range(0)));
  const auto prompt = sample_prompt(model(), 16, 7);
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(generate(model(), s, prompt, 200, ++seed));
  state.SetItemsProcessed(state.iterations() * 200);
}
BENCHMARK(BM_Generate)->Arg(0)->Arg(1)->Arg(2);

void BM_IsGreen(benchmark::State& state) {
  const SchemeSpec s = scheme_for(static_cast<int>(state.range(0)));
  std::vector<TokenId> window{3, 14, 15, 92, 65, 35};
  window.resize(s.window);
  TokenId t = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(is_green(t, window, s));
    t = (t + 1) % 1024;
  }
}
BENCHMARK(BM_IsGreen)->Arg(0)->Arg(1)->Arg(2);

void BM_WinMax(benchmark::State& state) {
  Rng r(3);
  std::vector<std::uint8_t> hits(static_cast<std::size_t>(state.range(0)));
  for (auto& h : hits) h = r.uniform() < 0.4;
  for (auto _ : state) benchmark::DoNotOptimize(winmax(hits, 0.25));
}
BENCHMARK(BM_WinMax)->Arg(200)->Arg(1000);

void BM_SpoofLearn(benchmark::State& state) {
  const SchemeSpec s = scheme_for(1);
  std::vector<TokenSequence> wm, base;
  for (std::uint64_t i = 0; i < static_cast<std::uint64_t>(state.range(0)); ++i) {
    const auto p = sample_prompt(model(), 16, i);
    const auto g = generate(model(), s, p, 200, 1000 + i);
    wm.push_back({g.tokens, g.prompt_len});
    base.push_back({generate_plain(model(), p, 200, 5000 + i), 16});
  }
  for (auto _ : state) benchmark::DoNotOptimize(spoof_learn(wm, base, 1024, 4));
  state.SetItemsProcessed(state.iterations() * state.range(0) * 400);
}
BENCHMARK(BM_SpoofLearn)->Arg(500);

}  // namespace
BENCHMARK_MAIN();
