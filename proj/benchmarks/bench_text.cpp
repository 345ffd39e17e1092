#include <benchmark/benchmark.h>

#include <string>

#include "evsynth/corpus.hpp"
#include "evsynth/screen.hpp"

namespace {

std::string prose(std::size_t bytes) {
    static const std::string sentence =
        "Older adults in the intervention arm walked further and reported fewer falls at follow up. ";
    std::string out;
    while (out.size() < bytes) out += sentence;
    out.resize(bytes);
    return out;
}

void BM_ChunkSpans(benchmark::State& state) {
    const auto text = prose(static_cast<std::size_t>(state.range(0)));
    const evsynth::corpus::ChunkPolicy policy{1200, 200, 100};
    for (auto _ : state) benchmark::DoNotOptimize(evsynth::corpus::chunk_spans(text, policy));
    state.SetBytesProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ChunkSpans)->Arg(10'000)->Arg(200'000);

void BM_Featurize(benchmark::State& state) {
    const auto abstract = prose(1500);
    for (auto _ : state) benchmark::DoNotOptimize(evsynth::screen::featurize("Walking and falls", abstract));
    state.SetBytesProcessed(state.iterations() * 1500);
}
BENCHMARK(BM_Featurize);

}  // namespace
