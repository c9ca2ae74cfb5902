#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "vipcap/model.hpp"

namespace vipcap {

/// Training and ablation configuration. Defaults are the reference
/// configuration (patch retrieval on, alpha * omega_add, attention fusion,
/// M = 200) on desk-scale model shapes.
struct TrainConfig {
    std::string name = "default";
    int batch_size = 128;
    int M = 200;
    double alpha = 5.0;
    int k = 3;
    NoiseVariant noise_variant = NoiseVariant::LearnableScaled;
    bool use_patch_retrieval = true;
    bool use_omega = true;
    bool use_alpha = true;
    FusionVariant ffn_variant = FusionVariant::Attention;
    double learning_rate = 1e-4;
    int epochs = 10;
    std::uint64_t seed = 0;
    /// Stop once an epoch's mean loss drops below this; 0 disables.
    double stop_loss = 0.0;

    int image_dim = 32;
    int text_dim = 32;
    int num_patches = 4;
    int max_text_tokens = 77;
    int head_layers = 2;
    int ffn_heads = 12;
    int ffn_head_dim = 16;
    double ffn_hidden_mult = 4.0;
    DecoderConfig decoder;
    AdapterConfig adapter;

    /// Text-only language-model pretraining of the toy decoder before it is
    /// frozen; 0 keeps the decoder at its random initialisation.
    int decoder_pretrain_epochs = 0;
    double decoder_pretrain_lr = 1e-3;

    void validate() const;
    ModelConfig model_config() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
/// Unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j);
TrainConfig load_train_config(const std::filesystem::path& path);

struct Example {
    std::string id;
    PatchFeatures patches;
    std::string caption;
};

/// pairs.jsonl under `dir`: {"id", "caption", "features"?}. "features" is a
/// VIPC file relative to `dir`; without it the synthetic encoder embeds the id.
std::vector<Example> load_dataset(const std::filesystem::path& dir, const EncoderConfig& encoder);

/// Vocabulary over captions and datastore texts plus the prompt template.
Vocabulary build_vocabulary(const std::vector<Example>& data, const EmbeddingIndex* index, std::size_t max_size);

std::vector<PreparedExample> prepare_dataset(const CaptionModel& model, const std::vector<Example>& data,
                                             const EmbeddingIndex* index);

struct TrainResult {
    CaptionModel model;
    std::vector<double> loss_history;  // mean loss per optimisation step
    std::vector<double> epoch_loss;
    std::uint64_t steps = 0;
};

/// Optimises vip.* and xattn.* only. Deterministic given (cfg, data, seed);
/// the ViP randomness of each example is derived from (seed, step, position).
TrainResult train(const TrainConfig& cfg, CaptionModel model, const std::vector<PreparedExample>& data);

/// Text-only LM training of decoder.* on the full prompt+caption sequences;
/// the decoder is frozen again afterwards.
std::vector<double> pretrain_decoder(CaptionModel& model, const std::vector<PreparedExample>& data, int epochs,
                                     double lr, std::uint64_t seed);

/// Mean per-example loss with inference-time sampling (fixed seed).
double evaluate_loss(const CaptionModel& model, const std::vector<PreparedExample>& data, std::uint64_t seed);

/// Builds the vocabulary and model, prepares the data, optionally pretrains
/// the decoder, then trains.
TrainResult run_training(const TrainConfig& cfg, const std::vector<Example>& data, const EmbeddingIndex* index);

enum class AblationAxis { Components, Ffn, M, Noise };

AblationAxis parse_ablation_axis(std::string_view name);
std::string_view to_string(AblationAxis axis) noexcept;

/// Configuration grid for one ablation axis, derived from `base`.
std::vector<TrainConfig> ablate(const TrainConfig& base, AblationAxis axis);

}  // namespace vipcap
