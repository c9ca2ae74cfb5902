#include <cstring>
#include <filesystem>

#include <gtest/gtest.h>

#include "toy_config.hpp"
#include "vipcap/checkpoint.hpp"
#include "vipcap/error.hpp"
#include "vipcap/synthetic.hpp"

namespace vipcap {
namespace {

struct Trained {
    TrainConfig cfg = testing::toy_train_config();
    SyntheticCorpus corpus;
    std::unique_ptr<EmbeddingIndex> index;
    std::unique_ptr<TrainResult> result;

    Trained() {
        corpus = make_synthetic_corpus(6, cfg.model_config().encoder, 4);
        index = std::make_unique<EmbeddingIndex>(corpus.datastore);
        result = std::make_unique<TrainResult>(run_training(cfg, corpus.examples, index.get()));
    }
};

TEST(Checkpoint, SerializeRoundTripIsBitExact) {
    Trained t;
    const Checkpoint ckpt = make_checkpoint(t.cfg, t.result->model, t.result->steps);
    const auto bytes = serialize_checkpoint(ckpt);
    const Checkpoint back = deserialize_checkpoint(bytes);
    EXPECT_TRUE(same_contents(ckpt, back));
    EXPECT_EQ(serialize_checkpoint(back), bytes);
    EXPECT_EQ(back.step, t.result->steps);
    EXPECT_EQ(back.rng.seed, t.cfg.seed);
}

TEST(Checkpoint, LoadedModelReproducesForwardOutputs) {
    Trained t;
    const auto path = std::filesystem::temp_directory_path() / "vipcap_ckpt_test.vipckpt";
    const Checkpoint ckpt = make_checkpoint(t.cfg, t.result->model, t.result->steps);
    save_checkpoint(path, ckpt);
    const CaptionModel a = model_from_checkpoint(ckpt);
    const CaptionModel b = model_from_checkpoint(load_checkpoint(path));
    std::filesystem::remove(path);

    const auto prepared = prepare_dataset(a, t.corpus.examples, t.index.get());
    for (const auto& ex : prepared) {
        const Matrix ra = refined_features(a, ex.text, ex.patches, 7).data;
        const Matrix rb = refined_features(b, ex.text, ex.patches, 7).data;
        ASSERT_EQ(ra.size(), rb.size());
        EXPECT_EQ(std::memcmp(ra.data(), rb.data(), sizeof(double) * static_cast<std::size_t>(ra.size())), 0);
        EXPECT_EQ(generate_caption(a, ex.text, ex.patches, ex.prompt, DecodeStrategy::greedy(), 8, 7),
                  generate_caption(b, ex.text, ex.patches, ex.prompt, DecodeStrategy::greedy(), 8, 7));
    }
    for (const auto& name : a.params.names()) EXPECT_EQ(a.params.trainable(name), b.params.trainable(name));
}

TEST(Checkpoint, MalformedInputIsDecodeError) {
    Trained t;
    auto bytes = serialize_checkpoint(make_checkpoint(t.cfg, t.result->model, 1));
    auto expect_decode = [](std::span<const std::byte> b) {
        try {
            deserialize_checkpoint(b);
            FAIL();
        } catch (const Error& e) {
            EXPECT_EQ(e.kind(), ErrorKind::Decode) << e.what();
        }
    };
    expect_decode(std::span(bytes).first(12));
    auto magic = bytes;
    magic[1] = std::byte{'X'};
    expect_decode(magic);
    auto cut = bytes;
    cut.resize(cut.size() - 4);
    expect_decode(cut);
}

}  // namespace
}  // namespace vipcap
