#include <string>
#include <vector>

#include <benchmark/benchmark.h>

#include "vipcap/datastore.hpp"
#include "vipcap/rng.hpp"

namespace {

using namespace vipcap;

RowVector random_row(Eigen::Index n, Rng& rng) {
    RowVector r(n);
    for (Eigen::Index i = 0; i < n; ++i) r(i) = rng.normal();
    return r;
}

void BM_RetrieveTopK(benchmark::State& state) {
    const auto entries = static_cast<int>(state.range(0));
    constexpr int kDim = 512;
    Rng rng(1);
    std::vector<CaptionEntry> list;
    list.reserve(static_cast<std::size_t>(entries));
    for (int i = 0; i < entries; ++i) list.push_back({"c" + std::to_string(i), "a caption", random_row(kDim, rng)});
    const EmbeddingIndex index(std::move(list));
    const RowVector query = random_row(kDim, rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(index.retrieve_topk(query, RetrievalConfig{3}));
    }
    state.SetItemsProcessed(state.iterations() * entries);
}
BENCHMARK(BM_RetrieveTopK)->RangeMultiplier(4)->Range(1 << 10, 1 << 16);

}  // namespace
