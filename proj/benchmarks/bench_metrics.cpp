#include <string>
#include <vector>

#include <benchmark/benchmark.h>

#include "vipcap/metrics.hpp"
#include "vipcap/rng.hpp"

namespace {

using namespace vipcap;

EvalCorpus random_corpus(int images, Rng& rng) {
    static const std::vector<std::string> words{"a", "man", "woman", "dog", "cat", "riding", "sitting", "on",
                                                "the", "beach", "street", "red", "bus", "with", "two", "plate"};
    auto sentence = [&] {
        std::string s;
        const int len = 6 + static_cast<int>(rng.next() % 8);
        for (int w = 0; w < len; ++w) s += (w ? " " : "") + words[rng.next() % words.size()];
        return s;
    };
    EvalCorpus c;
    for (int i = 0; i < images; ++i) {
        c.ids.push_back(std::to_string(i));
        c.candidates.push_back(sentence());
        c.references.push_back({sentence(), sentence(), sentence(), sentence(), sentence()});
    }
    return c;
}

void BM_Cider(benchmark::State& state) {
    Rng rng(5);
    const EvalCorpus c = random_corpus(static_cast<int>(state.range(0)), rng);
    for (auto _ : state) benchmark::DoNotOptimize(cider(c));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Cider)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_Bleu4(benchmark::State& state) {
    Rng rng(6);
    const EvalCorpus c = random_corpus(static_cast<int>(state.range(0)), rng);
    for (auto _ : state) benchmark::DoNotOptimize(bleu4(c));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Bleu4)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);

}  // namespace
