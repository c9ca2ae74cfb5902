#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vipcap/matrix.hpp"

namespace vipcap {

enum class EncoderMode { Synthetic, PretrainedAdapter };

struct EncoderConfig {
    int image_dim = 64;         // K
    int text_dim = 64;          // D
    int num_patches = 4;        // N
    int max_text_tokens = 77;
    EncoderMode mode = EncoderMode::Synthetic;

    void validate() const;
};

/// Patch count of a square ViT grid; image_size must be a multiple of patch_size.
int vit_patch_count(int image_size, int patch_size);

/// ViT-B/32 at 224x224: 768-wide patches on a 7x7 grid, 512-wide text tower.
EncoderConfig vit_b32_config();

/// N x K image patch embeddings; grid patches only, no class token.
struct PatchFeatures {
    Matrix data;

    Eigen::Index rows() const { return data.rows(); }
    Eigen::Index cols() const { return data.cols(); }
};

/// D-dimensional text embedding.
struct TextFeature {
    RowVector data;

    Eigen::Index size() const { return data.size(); }
};

/// Mean patch vector; used as the retrieval query when no global embedding exists.
RowVector mean_patch(const PatchFeatures& features);

class ImageEncoder {
public:
    explicit ImageEncoder(EncoderConfig cfg);
    virtual ~ImageEncoder() = default;

    const EncoderConfig& config() const noexcept { return cfg_; }
    virtual PatchFeatures encode(std::span<const std::byte> image) const = 0;

protected:
    EncoderConfig cfg_;
};

/// Seeds a unit-normal generator from a stable hash of the input bytes and
/// L2-normalises every row.
class SyntheticImageEncoder final : public ImageEncoder {
public:
    using ImageEncoder::ImageEncoder;
    PatchFeatures encode(std::span<const std::byte> image) const override;
};

/// Adapter for precomputed backbone outputs: the input bytes are a VIPC
/// feature container whose shape must match the config.
class FeatureFileImageEncoder final : public ImageEncoder {
public:
    using ImageEncoder::ImageEncoder;
    PatchFeatures encode(std::span<const std::byte> image) const override;
};

std::unique_ptr<ImageEncoder> make_image_encoder(const EncoderConfig& cfg);
PatchFeatures encode_image(std::span<const std::byte> image, const EncoderConfig& cfg);
PatchFeatures encode_image(std::string_view image, const EncoderConfig& cfg);

class TextEncoder {
public:
    explicit TextEncoder(EncoderConfig cfg);
    virtual ~TextEncoder() = default;

    const EncoderConfig& config() const noexcept { return cfg_; }
    /// Trims, truncates to max_text_tokens, then embeds.
    TextFeature encode(std::string_view prompt) const;

protected:
    virtual RowVector embed(std::string_view truncated) const = 0;
    EncoderConfig cfg_;
};

/// Sum of hashed per-token and per-(token, position) unit-normal vectors,
/// L2-normalised.
class SyntheticTextEncoder final : public TextEncoder {
public:
    using TextEncoder::TextEncoder;

protected:
    RowVector embed(std::string_view truncated) const override;
};

/// Plug-in point for a pretrained text tower.
class CallbackTextEncoder final : public TextEncoder {
public:
    using Backend = std::function<std::vector<float>(std::string_view)>;
    CallbackTextEncoder(EncoderConfig cfg, Backend backend);

protected:
    RowVector embed(std::string_view truncated) const override;

private:
    Backend backend_;
};

std::unique_ptr<TextEncoder> make_text_encoder(const EncoderConfig& cfg,
                                               CallbackTextEncoder::Backend backend = {});
TextFeature encode_text(std::string_view prompt, const EncoderConfig& cfg);

}  // namespace vipcap
