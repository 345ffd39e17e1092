#include <benchmark/benchmark.h>

#include <random>

#include "evsynth/retrieve.hpp"

namespace {

void BM_MmrSelect(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g(0.0, 1.0);
    auto unit = [&] {
        evsynth::stores::Embedding v(256);
        for (auto& x : v) x = g(rng);
        return evsynth::stores::normalized(v);
    };
    std::vector<evsynth::retrieve::MmrCandidate> cands;
    for (std::size_t i = 0; i < n; ++i) cands.push_back({"c" + std::to_string(i), unit(), 0.0});
    const auto q = unit();
    for (auto _ : state) benchmark::DoNotOptimize(evsynth::retrieve::mmr_select(cands, q, 0.7, 8));
}
BENCHMARK(BM_MmrSelect)->Arg(32)->Arg(128);

}  // namespace
