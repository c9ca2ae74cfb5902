#include <string>

#include <gtest/gtest.h>

#include "vipcap/encoders.hpp"
#include "vipcap/error.hpp"
#include "vipcap/features_io.hpp"
#include "vipcap/tokenizer.hpp"

namespace vipcap {
namespace {

EncoderConfig small(int n, int k, int d = 16) {
    EncoderConfig cfg;
    cfg.num_patches = n;
    cfg.image_dim = k;
    cfg.text_dim = d;
    return cfg;
}

TEST(ImageEncoder, SyntheticIsDeterministicAndShaped) {
    const auto cfg = small(4, 8);
    const PatchFeatures a = encode_image("image-bytes", cfg);
    const PatchFeatures b = encode_image("image-bytes", cfg);
    ASSERT_EQ(a.rows(), 4);
    ASSERT_EQ(a.cols(), 8);
    EXPECT_EQ(std::memcmp(a.data.data(), b.data.data(), sizeof(double) * 32), 0);
    for (Eigen::Index r = 0; r < 4; ++r) EXPECT_NEAR(a.data.row(r).norm(), 1.0, 1e-12);
    EXPECT_FALSE(a.data.isApprox(encode_image("other-bytes", cfg).data));
}

TEST(ImageEncoder, VitGridArithmetic) {
    EXPECT_EQ(vit_patch_count(224, 32), 49);
    const EncoderConfig vit = vit_b32_config();
    EXPECT_EQ(vit.num_patches, 49);
    EXPECT_EQ(vit.image_dim, 768);
    EXPECT_EQ(vit.text_dim, 512);
}

TEST(ImageEncoder, FeatureFileAdapter) {
    auto cfg = small(3, 2);
    cfg.mode = EncoderMode::PretrainedAdapter;
    Matrix m(3, 2);
    m << 1, 2, 3, 4, 5, 6.5;
    const auto bytes = encode_features(m);
    const PatchFeatures f = encode_image(bytes, cfg);
    EXPECT_EQ(f.data, m);

    const auto wrong = encode_features(Matrix::Ones(4, 2));
    try {
        encode_image(wrong, cfg);
        FAIL() << "expected a config error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Config);
    }
}

TEST(FeaturesIo, DecodeErrors) {
    auto bytes = encode_features(Matrix::Ones(2, 2));
    auto expect_decode = [](std::span<const std::byte> b) {
        try {
            decode_features(b);
            FAIL() << "expected a decode error";
        } catch (const Error& e) {
            EXPECT_EQ(e.kind(), ErrorKind::Decode);
        }
    };
    expect_decode(std::span(bytes).first(10));
    auto bad_magic = bytes;
    bad_magic[0] = std::byte{'X'};
    expect_decode(bad_magic);
    auto bad_version = bytes;
    bad_version[4] = std::byte{2};
    expect_decode(bad_version);
    auto truncated = bytes;
    truncated.pop_back();
    expect_decode(truncated);
}

TEST(FeaturesIo, RoundTripIsFloat32) {
    Matrix m(1, 3);
    m << 0.1, -2.5, 1e-3;
    const Matrix back = decode_features(encode_features(m));
    for (int i = 0; i < 3; ++i) EXPECT_EQ(back(0, i), static_cast<double>(static_cast<float>(m(0, i))));
}

TEST(TextEncoder, DeterministicShapedAndTruncated) {
    const auto cfg = small(4, 8, 32);
    const TextFeature a = encode_text("a dog runs in the park", cfg);
    EXPECT_EQ(a.size(), 32);
    EXPECT_EQ(a.data, encode_text("a dog runs in the park", cfg).data);

    std::string longp;
    for (int i = 0; i < 120; ++i) longp += "word" + std::to_string(i) + " ";
    ASSERT_GT(count_tokens(longp), 77u);
    const std::string cut(truncate_tokens(longp, 77));
    EXPECT_EQ(encode_text(longp, cfg).data, encode_text(cut, cfg).data);
    EXPECT_FALSE(encode_text(truncate_tokens(longp, 76), cfg).data.isApprox(encode_text(cut, cfg).data));
}

TEST(TextEncoder, EmptyPromptIsInputError) {
    try {
        encode_text("   \t ", small(4, 8));
        FAIL() << "expected an input error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Input);
    }
}

TEST(TextEncoder, CallbackBackendWidth) {
    auto cfg = small(4, 8, 512);
    cfg.mode = EncoderMode::PretrainedAdapter;
    const auto enc = make_text_encoder(cfg, [](std::string_view) { return std::vector<float>(512, 0.5f); });
    EXPECT_EQ(enc->encode("hello").size(), 512);
    const auto bad = make_text_encoder(cfg, [](std::string_view) { return std::vector<float>(3, 0.5f); });
    EXPECT_THROW(bad->encode("hello"), Error);
}

TEST(EncoderConfig, Validation) {
    EXPECT_THROW(small(0, 8).validate(), Error);
    EXPECT_THROW(small(4, 0).validate(), Error);
    auto cfg = small(4, 8);
    cfg.max_text_tokens = 0;
    EXPECT_THROW(cfg.validate(), Error);
}

}  // namespace
}  // namespace vipcap
