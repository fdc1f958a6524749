#include "debate/harness.hpp"

#include "support/scenarios.hpp"

#include <benchmark/benchmark.h>

#include <filesystem>

using namespace debate;
using namespace debate::testing;

namespace {

const std::vector<protocol::DebateTranscript>& corpus(std::size_t n) {
    static std::map<std::size_t, std::vector<protocol::DebateTranscript>> cache;
    auto& out = cache[n];
    if (!out.empty()) return out;
    static std::vector<protocol::DebateTranscript> seed = [] {
        auto dir = std::filesystem::temp_directory_path() / "debate_bench_seed";
        std::filesystem::remove_all(dir);
        auto a = harness::run_problems(oracle_config(dir, "seed", 1), oracle_problems(), offline_runtime());
        std::filesystem::remove_all(dir);
        return a.transcripts;
    }();
    for (std::size_t i = 0; i < n; ++i) {
        auto t = seed[i % seed.size()];
        t.question_id += "-" + std::to_string(i);
        out.push_back(std::move(t));
    }
    return out;
}

void BM_curve_serial(benchmark::State& state) {
    const auto& ts = corpus(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(harness::per_round_accuracy_serial(ts));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_curve_openmp(benchmark::State& state) {
    const auto& ts = corpus(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(harness::per_round_accuracy(ts));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

} // namespace

BENCHMARK(BM_curve_serial)->Arg(100)->Arg(1000)->Arg(5000);
BENCHMARK(BM_curve_openmp)->Arg(100)->Arg(1000)->Arg(5000);

BENCHMARK_MAIN();
