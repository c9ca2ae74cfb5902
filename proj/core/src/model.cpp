#include "vipcap/model.hpp"

#include <fmt/format.h>

#include "vipcap/error.hpp"

namespace vipcap {

void ModelConfig::validate() const {
    encoder.validate();
    vip.validate();
    decoder.validate();
    require(encoder.image_dim == vip.image_dim, ErrorKind::Config,
            fmt::format("encoder K={} but vip K={}", encoder.image_dim, vip.image_dim));
    require(encoder.text_dim == vip.text_dim, ErrorKind::Config,
            fmt::format("encoder D={} but vip D={}", encoder.text_dim, vip.text_dim));
    require(adapter.num_heads >= 1 && adapter.head_dim >= 1, ErrorKind::Config, "adapter: invalid head shape");
    require(retrieval.k >= 0, ErrorKind::Config, "retrieval: k must be >= 0");
}

ModelConfig reference_model_config() {
    ModelConfig cfg;
    cfg.encoder = vit_b32_config();
    cfg.vip.image_dim = cfg.encoder.image_dim;
    cfg.vip.text_dim = cfg.encoder.text_dim;
    cfg.vip.alpha = 5.0;
    cfg.vip.num_samples = 200;
    cfg.vip.ffn = FFNConfig{1, 12, 16, 4.0, FusionVariant::Attention};
    cfg.decoder = DecoderConfig::gpt2_base();
    cfg.adapter = AdapterConfig{12, 16};
    cfg.retrieval.k = 3;
    return cfg;
}

ParameterLayout model_layout(const ModelConfig& cfg) {
    cfg.validate();
    ParameterLayout layout = vip_layout(cfg.vip, true);
    const ParameterLayout adapter = adapter_layout(cfg.decoder, cfg.adapter, cfg.vip.image_dim, true);
    const ParameterLayout decoder = decoder_layout(cfg.decoder, false);
    layout.insert(layout.end(), adapter.begin(), adapter.end());
    layout.insert(layout.end(), decoder.begin(), decoder.end());
    return layout;
}

CaptionModel CaptionModel::create(const ModelConfig& cfg, Vocabulary vocab, std::uint64_t seed) {
    require(vocab.size() <= static_cast<std::size_t>(cfg.decoder.vocab_size), ErrorKind::Config,
            fmt::format("vocabulary of {} exceeds decoder size {}", vocab.size(), cfg.decoder.vocab_size));
    CaptionModel model{cfg, std::move(vocab), {}};
    model.params = ParameterStore::materialize(model_layout(cfg), Rng(seed).split("init"));
    return model;
}

std::size_t count_trainable(const ModelConfig& cfg) { return count_trainable(model_layout(cfg)); }
std::size_t count_trainable(const CaptionModel& model) { return model.params.count_trainable(); }

std::string retrieval_prompt(const EmbeddingIndex* index, const RowVector& query, int k,
                             std::string_view exclude_id, std::size_t token_budget) {
    std::vector<std::string> captions;
    if (index != nullptr && k > 0) {
        const int ask = std::min<int>(k + 1, static_cast<int>(index->size()));
        for (const auto& hit : index->retrieve_topk(query, RetrievalConfig{ask})) {
            if (hit.entry->id == exclude_id) continue;
            if (static_cast<int>(captions.size()) == k) break;
            captions.push_back(hit.entry->text);
        }
    }
    return format_prompt(captions, PromptTemplate{}, token_budget);
}

PreparedExample prepare_example(const CaptionModel& model, const TextEncoder& text_encoder,
                                const EmbeddingIndex* index, std::string id, PatchFeatures patches,
                                std::string caption) {
    const ModelConfig& cfg = model.config;
    require(patches.rows() == cfg.encoder.num_patches && patches.cols() == cfg.encoder.image_dim, ErrorKind::Config,
            fmt::format("example '{}': features are {}x{}, model expects {}x{}", id, patches.rows(), patches.cols(),
                        cfg.encoder.num_patches, cfg.encoder.image_dim));
    PreparedExample ex;
    ex.prompt = retrieval_prompt(index, mean_patch(patches), cfg.retrieval.k, id,
                                 static_cast<std::size_t>(cfg.encoder.max_text_tokens));
    ex.text = text_encoder.encode(ex.prompt);
    ex.sequence = make_sequence(model.vocab, ex.prompt, caption);
    ex.id = std::move(id);
    ex.patches = std::move(patches);
    ex.caption = std::move(caption);
    return ex;
}

ag::Var example_loss(const CaptionModel& model, const PreparedExample& ex, const Rng& rng) {
    const ModelConfig& cfg = model.config;
    const VipTrace trace = vip_trace(model.params, cfg.vip, ex.text, ag::constant(ex.patches.data), rng);
    const auto inputs = ex.sequence.inputs();
    const ag::Var logits = forward_with_prompt(model.params, cfg.decoder, cfg.adapter, inputs, trace.refined);
    return caption_loss(logits, ex.sequence);
}

PatchFeatures refined_features(const CaptionModel& model, const TextFeature& text, const PatchFeatures& patches,
                               std::uint64_t seed) {
    return vip_forward(model.params, model.config.vip, text, patches, Rng(seed).split("inference"));
}

std::string generate_caption(const CaptionModel& model, const TextFeature& text, const PatchFeatures& patches,
                             std::string_view prompt, const DecodeStrategy& strategy, int max_len,
                             std::uint64_t seed) {
    const PatchFeatures refined = refined_features(model, text, patches, seed);
    const auto ids = generate_tokens(model.params, model.config.decoder, model.config.adapter,
                                     prompt_tokens(model.vocab, prompt), ag::constant(refined.data), strategy, max_len,
                                     static_cast<int>(model.vocab.size()));
    return model.vocab.decode(ids);
}

}  // namespace vipcap
