#include "vipcap/synthetic.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <numeric>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "vipcap/error.hpp"
#include "vipcap/features_io.hpp"

namespace vipcap {
namespace {

const std::array<std::vector<std::string>, 4> kSlots = {{
    {"red", "blue", "green", "yellow", "black", "white"},
    {"dog", "cat", "horse", "bird", "car", "boat"},
    {"running", "sitting", "standing", "jumping", "sleeping"},
    {"park", "street", "beach", "field", "kitchen"},
}};

std::string render(const std::array<std::size_t, 4>& pick) {
    return fmt::format("a {} {} {} in the {}", kSlots[0][pick[0]], kSlots[1][pick[1]], kSlots[2][pick[2]],
                       kSlots[3][pick[3]]);
}

RowVector unit_vector(Rng rng, Eigen::Index dim) {
    RowVector v(dim);
    for (Eigen::Index i = 0; i < dim; ++i) v(i) = rng.normal();
    return v / v.norm();
}

}  // namespace

SyntheticCorpus make_synthetic_corpus(int count, const EncoderConfig& encoder, std::uint64_t seed, double noise) {
    encoder.validate();
    std::size_t combos = 1;
    for (const auto& s : kSlots) combos *= s.size();
    require(count >= 1 && static_cast<std::size_t>(count) <= combos, ErrorKind::Input,
            fmt::format("synthetic corpus: count must be in [1, {}]", combos));

    const Rng root(seed);
    std::vector<std::size_t> codes(combos);
    std::iota(codes.begin(), codes.end(), std::size_t{0});
    Rng pick_rng = root.split("captions");
    std::shuffle(codes.begin(), codes.end(), pick_rng.engine());

    const Eigen::Index dim = encoder.image_dim;
    std::array<std::vector<RowVector>, 4> slot_vectors;
    for (std::size_t s = 0; s < kSlots.size(); ++s) {
        for (const auto& word : kSlots[s]) slot_vectors[s].push_back(unit_vector(root.split("slot").split(word), dim));
    }

    SyntheticCorpus corpus;
    for (int n = 0; n < count; ++n) {
        std::size_t code = codes[static_cast<std::size_t>(n)];
        std::array<std::size_t, 4> pick{};
        for (std::size_t s = 0; s < kSlots.size(); ++s) {
            pick[s] = code % kSlots[s].size();
            code /= kSlots[s].size();
        }
        Example ex;
        ex.id = fmt::format("syn{:04d}", n);
        ex.caption = render(pick);
        Rng noise_rng = root.split("noise").split(static_cast<std::uint64_t>(n));
        Matrix patches(encoder.num_patches, dim);
        for (Eigen::Index j = 0; j < encoder.num_patches; ++j) {
            const auto s = static_cast<std::size_t>(j) % kSlots.size();
            patches.row(j) = slot_vectors[s][pick[s]];
            for (Eigen::Index c = 0; c < dim; ++c) patches(j, c) += noise * noise_rng.normal();
        }
        ex.patches = PatchFeatures{std::move(patches)};
        corpus.datastore.push_back({ex.id, ex.caption, mean_patch(ex.patches)});
        corpus.examples.push_back(std::move(ex));
    }
    return corpus;
}

void save_synthetic_corpus(const std::filesystem::path& dir, const SyntheticCorpus& corpus) {
    const auto data_dir = dir / "data";
    std::filesystem::create_directories(data_dir / "features");
    std::ofstream pairs(data_dir / "pairs.jsonl");
    require(pairs.good(), ErrorKind::Io, fmt::format("cannot write '{}'", (data_dir / "pairs.jsonl").string()));
    for (const auto& ex : corpus.examples) {
        const std::string rel = fmt::format("features/{}.vipc", ex.id);
        write_features(data_dir / rel, ex.patches.data);
        pairs << nlohmann::json{{"id", ex.id}, {"caption", ex.caption}, {"features", rel}}.dump() << '\n';
    }
    save_datastore(dir / "datastore", corpus.datastore);
}

}  // namespace vipcap
