#include <benchmark/benchmark.h>

#include <random>

#include "evsynth/stores.hpp"

namespace {

evsynth::stores::Embedding unit(std::mt19937_64& rng, std::size_t dim) {
    std::normal_distribution<double> n(0.0, 1.0);
    evsynth::stores::Embedding v(dim);
    for (auto& x : v) x = n(rng);
    return evsynth::stores::normalized(v);
}

void BM_VectorSearch(benchmark::State& state) {
    const auto entries = static_cast<std::size_t>(state.range(0));
    constexpr std::size_t dim = 256;
    std::mt19937_64 rng(1);
    evsynth::stores::VectorIndex index(dim);
    for (std::size_t i = 0; i < entries; ++i) {
        evsynth::MetadataView meta{{"year", std::int64_t{2000 + static_cast<int>(i % 25)}}};
        index.upsert({"c" + std::to_string(i), "d" + std::to_string(i), unit(rng, dim), meta}, 1);
    }
    const auto q = unit(rng, dim);
    for (auto _ : state) benchmark::DoNotOptimize(index.search(q, {}, 10));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(entries));
}
BENCHMARK(BM_VectorSearch)->Arg(1000)->Arg(10000);

void BM_VectorSearchFiltered(benchmark::State& state) {
    constexpr std::size_t dim = 256;
    std::mt19937_64 rng(2);
    evsynth::stores::VectorIndex index(dim);
    for (std::size_t i = 0; i < 10000; ++i) {
        evsynth::MetadataView meta{{"year", std::int64_t{2000 + static_cast<int>(i % 25)}}};
        index.upsert({"c" + std::to_string(i), "d" + std::to_string(i), unit(rng, dim), meta}, 1);
    }
    const auto q = unit(rng, dim);
    const std::vector<evsynth::Predicate> filter{{"year", evsynth::Comparator::Ge, std::int64_t{2020}}};
    for (auto _ : state) benchmark::DoNotOptimize(index.search(q, filter, 10));
}
BENCHMARK(BM_VectorSearchFiltered);

}  // namespace
