#include <benchmark/benchmark.h>

#include "vipcap/params.hpp"
#include "vipcap/rng.hpp"
#include "vipcap/vip.hpp"

namespace {

using namespace vipcap;

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    return m;
}

// Argmax-cosine selection of M samples against N = 49 patches.
void BM_PatchRetrieve(benchmark::State& state) {
    const auto m = state.range(0);
    const auto k = state.range(1);
    Rng rng(2);
    const SemanticSamples g{random_matrix(m, k, rng), Matrix::Zero(m, k)};
    const PatchFeatures v{random_matrix(49, k, rng)};
    for (auto _ : state) {
        benchmark::DoNotOptimize(patch_retrieve(g, v));
    }
    state.SetItemsProcessed(state.iterations() * m * 49);
}
BENCHMARK(BM_PatchRetrieve)->ArgsProduct({{100, 200, 500}, {64, 768}});

void BM_VipForward(benchmark::State& state) {
    VipConfig cfg;
    cfg.image_dim = static_cast<int>(state.range(0));
    cfg.text_dim = cfg.image_dim;
    cfg.num_samples = static_cast<int>(state.range(1));
    const ParameterStore store = ParameterStore::materialize(vip_layout(cfg), Rng(3));
    Rng rng(4);
    const TextFeature text{random_matrix(1, cfg.text_dim, rng)};
    const PatchFeatures patches{random_matrix(49, cfg.image_dim, rng)};
    ag::NoGradGuard guard;
    std::uint64_t i = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(vip_forward(store, cfg, text, patches, rng.split(i++)));
    }
}
BENCHMARK(BM_VipForward)->Args({64, 200})->Args({192, 200})->Args({192, 500})->Unit(benchmark::kMillisecond);

}  // namespace
