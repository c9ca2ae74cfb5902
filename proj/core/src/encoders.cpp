#include "vipcap/encoders.hpp"

#include <cmath>

#include <fmt/format.h>

#include "vipcap/error.hpp"
#include "vipcap/features_io.hpp"
#include "vipcap/rng.hpp"
#include "vipcap/tokenizer.hpp"

namespace vipcap {
namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n\f\v");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n\f\v");
    return s.substr(first, last - first + 1);
}

void normalize_row(auto&& row) {
    const double norm = row.norm();
    if (norm > 0.0) row /= norm;
}

}  // namespace

void EncoderConfig::validate() const {
    require(image_dim >= 1, ErrorKind::Config, fmt::format("image_dim must be >= 1 (got {})", image_dim));
    require(text_dim >= 1, ErrorKind::Config, fmt::format("text_dim must be >= 1 (got {})", text_dim));
    require(num_patches >= 1, ErrorKind::Config, fmt::format("num_patches must be >= 1 (got {})", num_patches));
    require(max_text_tokens >= 1, ErrorKind::Config,
            fmt::format("max_text_tokens must be >= 1 (got {})", max_text_tokens));
}

int vit_patch_count(int image_size, int patch_size) {
    require(image_size > 0 && patch_size > 0 && image_size % patch_size == 0, ErrorKind::Config,
            fmt::format("image size {} is not a multiple of patch size {}", image_size, patch_size));
    const int side = image_size / patch_size;
    return side * side;
}

EncoderConfig vit_b32_config() {
    EncoderConfig cfg;
    cfg.image_dim = 768;
    cfg.text_dim = 512;
    cfg.num_patches = vit_patch_count(224, 32);
    cfg.mode = EncoderMode::PretrainedAdapter;
    return cfg;
}

RowVector mean_patch(const PatchFeatures& features) { return features.data.colwise().mean(); }

ImageEncoder::ImageEncoder(EncoderConfig cfg) : cfg_(cfg) { cfg_.validate(); }

PatchFeatures SyntheticImageEncoder::encode(std::span<const std::byte> image) const {
    Rng rng(stable_hash(image));
    PatchFeatures out{Matrix(cfg_.num_patches, cfg_.image_dim)};
    for (Eigen::Index i = 0; i < out.data.size(); ++i) out.data.data()[i] = rng.normal();
    for (Eigen::Index r = 0; r < out.data.rows(); ++r) normalize_row(out.data.row(r));
    return out;
}

PatchFeatures FeatureFileImageEncoder::encode(std::span<const std::byte> image) const {
    PatchFeatures out{decode_features(image)};
    require(out.rows() == cfg_.num_patches && out.cols() == cfg_.image_dim, ErrorKind::Config,
            fmt::format("feature file is {}x{}, encoder expects {}x{}", out.rows(), out.cols(), cfg_.num_patches,
                        cfg_.image_dim));
    return out;
}

std::unique_ptr<ImageEncoder> make_image_encoder(const EncoderConfig& cfg) {
    if (cfg.mode == EncoderMode::Synthetic) return std::make_unique<SyntheticImageEncoder>(cfg);
    return std::make_unique<FeatureFileImageEncoder>(cfg);
}

PatchFeatures encode_image(std::span<const std::byte> image, const EncoderConfig& cfg) {
    return make_image_encoder(cfg)->encode(image);
}

PatchFeatures encode_image(std::string_view image, const EncoderConfig& cfg) {
    return encode_image(std::as_bytes(std::span(image.data(), image.size())), cfg);
}

TextEncoder::TextEncoder(EncoderConfig cfg) : cfg_(cfg) { cfg_.validate(); }

TextFeature TextEncoder::encode(std::string_view prompt) const {
    const std::string_view trimmed = trim(prompt);
    require(!trimmed.empty(), ErrorKind::Input, "encode_text: empty prompt");
    const std::string_view truncated = truncate_tokens(trimmed, static_cast<std::size_t>(cfg_.max_text_tokens));
    TextFeature out{embed(truncated)};
    require(out.size() == cfg_.text_dim, ErrorKind::Config,
            fmt::format("text encoder produced {} values, expected {}", out.size(), cfg_.text_dim));
    require(out.data.allFinite(), ErrorKind::Numeric, "text encoder produced non-finite values");
    return out;
}

RowVector SyntheticTextEncoder::embed(std::string_view truncated) const {
    RowVector acc = RowVector::Zero(cfg_.text_dim);
    const auto tokens = tokenize(truncated);
    for (std::size_t pos = 0; pos < tokens.size(); ++pos) {
        const std::uint64_t h = stable_hash(tokens[pos].text);
        Rng word(h);
        Rng placed(mix_seed(h, pos));
        for (Eigen::Index k = 0; k < acc.size(); ++k) acc(k) += word.normal() + 0.25 * placed.normal();
    }
    normalize_row(acc);
    return acc;
}

CallbackTextEncoder::CallbackTextEncoder(EncoderConfig cfg, Backend backend)
    : TextEncoder(cfg), backend_(std::move(backend)) {
    require(static_cast<bool>(backend_), ErrorKind::Config, "pretrained text encoder needs a backend");
}

RowVector CallbackTextEncoder::embed(std::string_view truncated) const {
    const std::vector<float> raw = backend_(truncated);
    RowVector out(static_cast<Eigen::Index>(raw.size()));
    for (std::size_t i = 0; i < raw.size(); ++i) out(static_cast<Eigen::Index>(i)) = raw[i];
    return out;
}

std::unique_ptr<TextEncoder> make_text_encoder(const EncoderConfig& cfg, CallbackTextEncoder::Backend backend) {
    if (cfg.mode == EncoderMode::Synthetic) return std::make_unique<SyntheticTextEncoder>(cfg);
    return std::make_unique<CallbackTextEncoder>(cfg, std::move(backend));
}

TextFeature encode_text(std::string_view prompt, const EncoderConfig& cfg) {
    EncoderConfig synthetic = cfg;
    require(cfg.mode == EncoderMode::Synthetic, ErrorKind::Config,
            "encode_text without a backend is only available in synthetic mode");
    return SyntheticTextEncoder(synthetic).encode(prompt);
}

}  // namespace vipcap
