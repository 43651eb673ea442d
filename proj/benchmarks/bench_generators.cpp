#include <benchmark/benchmark.h>

#include "serialprobe/concept.hpp"
#include "serialprobe/config.hpp"
#include "serialprobe/geometry.hpp"
#include "serialprobe/numerosity.hpp"
#include "serialprobe/oddball.hpp"
#include "serialprobe/rotation.hpp"

using namespace serialprobe;

namespace {

const std::vector<dsl::ConceptProgram>& library() {
    static const auto lib = dsl::load_library(data_dir() / "concepts.geo");
    return lib;
}

// Realize one concept per MDL bucket; arg = index into the library.
void BM_Realize(benchmark::State& state) {
    const auto& program = library()[static_cast<std::size_t>(state.range(0))];
    std::uint64_t seed = 1;
    for (auto _ : state) benchmark::DoNotOptimize(geom::realize(program, seed++));
    state.SetLabel(program.name);
}
BENCHMARK(BM_Realize)->Arg(0)->Arg(12)->Arg(36);

void BM_OddballTrial(benchmark::State& state) {
    const auto& program = library()[static_cast<std::size_t>(state.range(0))];
    std::uint64_t seed = 1;
    for (auto _ : state) benchmark::DoNotOptimize(oddball::generate_oddball_trial(program, "bench", seed++));
    state.SetLabel(program.name);
}
BENCHMARK(BM_OddballTrial)->Arg(0)->Arg(36)->Unit(benchmark::kMicrosecond);

void BM_RenderOddball(benchmark::State& state) {
    const auto scenes = oddball::generate_oddball_trial(library()[10], "bench", 3);
    for (auto _ : state) benchmark::DoNotOptimize(oddball::render_oddball(scenes));
}
BENCHMARK(BM_RenderOddball)->Unit(benchmark::kMillisecond);

void BM_SpanMask(benchmark::State& state) {
    Rng rng(4);
    const auto blob = numerosity::generate_blob(rng, 0.3);
    const int res = static_cast<int>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(raster::SpanMask::from_polygon(blob.outline, res));
}
BENCHMARK(BM_SpanMask)->Arg(256)->Arg(512)->Arg(1024);

// Placement of n blobs; the overlapping chain is the expensive case.
void BM_NumerosityTrial(benchmark::State& state) {
    const auto condition = state.range(1) ? numerosity::Condition::UniformOverlapping : numerosity::Condition::UniformDistinct;
    const int n = static_cast<int>(state.range(0));
    std::uint64_t seed = 1;
    for (auto _ : state) benchmark::DoNotOptimize(numerosity::generate_numerosity_trial(condition, n, "bench", seed++));
}
BENCHMARK(BM_NumerosityTrial)->ArgsProduct({{2, 8}, {0, 1}})->Unit(benchmark::kMillisecond);

void BM_Chirality(benchmark::State& state) {
    const auto& glyph = rotation::glyph_library()[17];
    const int res = static_cast<int>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(rotation::check_chirality(glyph, res));
}
BENCHMARK(BM_Chirality)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_RenderRotation(benchmark::State& state) {
    const auto trials = rotation::all_trials();
    const auto& t = trials[100];
    const auto& glyph = rotation::glyph_library()[static_cast<std::size_t>(t.label - 'A')];
    for (auto _ : state) benchmark::DoNotOptimize(rotation::render_rotation(t, glyph));
}
BENCHMARK(BM_RenderRotation)->Unit(benchmark::kMicrosecond);

}  // namespace
