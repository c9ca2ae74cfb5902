#pragma once

#include <cstdint>
#include <string>

#include "vipcap/datastore.hpp"
#include "vipcap/decoder.hpp"
#include "vipcap/encoders.hpp"
#include "vipcap/params.hpp"
#include "vipcap/tokenizer.hpp"
#include "vipcap/vip.hpp"

namespace vipcap {

struct ModelConfig {
    EncoderConfig encoder;
    VipConfig vip;
    DecoderConfig decoder;
    AdapterConfig adapter;
    RetrievalConfig retrieval;

    void validate() const;
};

/// ViT-B/32 features, GPT-2 base decoder, 12-head adapters of width 16,
/// M = 200, alpha = 5, k = 3.
ModelConfig reference_model_config();

/// vip.* and xattn.* train; decoder.* is frozen.
ParameterLayout model_layout(const ModelConfig& cfg);

struct CaptionModel {
    ModelConfig config;
    Vocabulary vocab;
    ParameterStore params;

    static CaptionModel create(const ModelConfig& cfg, Vocabulary vocab, std::uint64_t seed);
};

std::size_t count_trainable(const ModelConfig& cfg);
std::size_t count_trainable(const CaptionModel& model);

/// Conditioning for one image: patch features, the hard prompt built from
/// retrieved captions, its text embedding, and the token sequence.
struct PreparedExample {
    std::string id;
    PatchFeatures patches;
    std::string caption;
    std::string prompt;
    TextFeature text;
    CaptionSequence sequence;
};

/// Retrieves the top-k captions for `query` (skipping entries whose id equals
/// `exclude_id`) and renders the hard prompt within `token_budget`.
std::string retrieval_prompt(const EmbeddingIndex* index, const RowVector& query, int k,
                             std::string_view exclude_id, std::size_t token_budget);

PreparedExample prepare_example(const CaptionModel& model, const TextEncoder& text_encoder,
                                const EmbeddingIndex* index, std::string id, PatchFeatures patches,
                                std::string caption);

/// Mean token NLL of one example; ViP randomness is drawn from `rng`.
ag::Var example_loss(const CaptionModel& model, const PreparedExample& ex, const Rng& rng);

/// Refined features for an example at inference time.
PatchFeatures refined_features(const CaptionModel& model, const TextFeature& text, const PatchFeatures& patches,
                               std::uint64_t seed);

std::string generate_caption(const CaptionModel& model, const TextFeature& text, const PatchFeatures& patches,
                             std::string_view prompt, const DecodeStrategy& strategy, int max_len,
                             std::uint64_t seed);

}  // namespace vipcap
