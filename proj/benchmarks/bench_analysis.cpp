#include <benchmark/benchmark.h>

#include "serialprobe/analysis.hpp"
#include "serialprobe/rng.hpp"

using namespace serialprobe;

namespace {

std::vector<double> noise(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal();
    return v;
}

void BM_Pearson(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto x = noise(n, 1), y = noise(n, 2);
    for (auto _ : state) benchmark::DoNotOptimize(analysis::pearson(x, y));
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Pearson)->RangeMultiplier(8)->Range(8, 32768)->Complexity();

void BM_WelchT(benchmark::State& state) {
    const auto a = noise(static_cast<std::size_t>(state.range(0)), 3), b = noise(static_cast<std::size_t>(state.range(0)), 4);
    for (auto _ : state) benchmark::DoNotOptimize(analysis::ttest(a, b, false));
}
BENCHMARK(BM_WelchT)->Arg(37)->Arg(3700);

void BM_Wilson(benchmark::State& state) {
    std::size_t s = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(analysis::wilson_ci(s % 101, 100));
        ++s;
    }
}
BENCHMARK(BM_Wilson);

// A full oddball-sized population: 296 participants x 50 trials.
void BM_ZScoreRt(benchmark::State& state) {
    Rng rng(5);
    std::vector<service::HumanResponse> responses;
    for (int p = 0; p < 296; ++p) {
        for (int k = 0; k < 50; ++k) {
            service::HumanResponse r;
            r.session_id = std::to_string(p);
            r.trial_id = std::to_string(k);
            r.rt_ms = 1200 + 300 * rng.normal();
            responses.push_back(std::move(r));
        }
    }
    for (auto _ : state) benchmark::DoNotOptimize(analysis::zscore_rt(responses, analysis::AnalysisOptions{}));
}
BENCHMARK(BM_ZScoreRt)->Unit(benchmark::kMillisecond);

}  // namespace
