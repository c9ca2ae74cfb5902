#pragma once

// Retrieval-text visual prompt: a Gaussian head fitted to the prompt's text
// embedding, M reparameterised draws from it, per-patch argmax selection of
// the most similar draw, a single fusion block, and V' = V + Z.

#include <string_view>
#include <vector>

#include "vipcap/autograd.hpp"
#include "vipcap/encoders.hpp"
#include "vipcap/params.hpp"
#include "vipcap/rng.hpp"

namespace vipcap {

/// Additive term in the Gaussian mean.
enum class NoiseVariant {
    None,             // nothing added
    Gauss,            // fresh N(0, 1) draw
    UnifSym,          // fresh Unif(-1, 1) draw
    UnifGauss,        // Unif(0, 1) x N(0, 1)
    LearnableScaled,  // alpha * omega_add
};

enum class FusionVariant { Sum, Concat, MlpSum, MlpConcat, Attention };

std::string_view to_string(NoiseVariant v) noexcept;
std::string_view to_string(FusionVariant v) noexcept;
NoiseVariant parse_noise_variant(std::string_view name);
FusionVariant parse_fusion_variant(std::string_view name);

struct FFNConfig {
    int num_layers = 1;
    int num_heads = 12;
    int head_dim = 16;  // 0 derives image_dim / num_heads
    double hidden_mult = 4.0;
    FusionVariant variant = FusionVariant::Attention;

    int resolved_head_dim(int image_dim) const;
    void validate(int image_dim) const;
};

struct VipConfig {
    int image_dim = 64;   // K
    int text_dim = 64;    // D
    int head_layers = 2;  // depth of H_mu and H_sigma
    double alpha = 5.0;
    NoiseVariant noise = NoiseVariant::LearnableScaled;
    bool use_omega = true;
    bool use_alpha = true;
    double sigma_floor = 1e-6;
    int num_samples = 200;  // M
    bool use_patch_retrieval = true;
    FFNConfig ffn;

    void validate() const;
    /// Whether omega_add exists as a parameter under this configuration.
    bool has_omega() const { return noise == NoiseVariant::LearnableScaled && use_omega; }
    /// Multiplier applied to omega_add in the mean.
    double omega_scale() const { return use_alpha ? alpha : 1.0; }
};

/// Parameters under vip.h_mu.*, vip.h_sigma.*, vip.omega_add, vip.ffn.*.
ParameterLayout vip_layout(const VipConfig& cfg, bool trainable = true);

struct GaussianParams {
    RowVector mu;
    RowVector sigma;  // strictly positive
};

/// Differentiable Gaussian head output. `sigma_pre` is H_sigma's raw output
/// before softplus and the floor.
struct GaussianEstimate {
    ag::Var mu;
    ag::Var sigma_pre;
    ag::Var sigma;

    GaussianParams params() const { return {mu.value(), sigma.value()}; }
};

/// mu = H_mu(text) + additive term; sigma = softplus(H_sigma(text)) + floor.
/// `noise_rng` feeds the random additive variants and may be null otherwise.
GaussianEstimate estimate_gaussian(const ParameterStore& store, const VipConfig& cfg, const TextFeature& text,
                                   Rng* noise_rng = nullptr);

/// sigma from a raw pre-activation: softplus(pre) + floor.
ag::Var positive_sigma(const ag::Var& pre, double floor);

struct SemanticSamples {
    Matrix data;   // M x K
    Matrix noise;  // M x K standard-normal draws
};

Matrix draw_standard_normal(int rows, int cols, Rng& rng);
SemanticSamples sample_semantics(const GaussianParams& params, int num_samples, Rng& rng);
/// Differentiable G = mu + sigma ⊙ noise, row-wise.
ag::Var sample_semantics(const ag::Var& mu, const ag::Var& sigma, const Matrix& noise);

struct RetrievedSemantics {
    Matrix data;               // N x K
    std::vector<int> indices;  // 0-based rows of G, one per patch
};

/// For each patch row of V, the index of the most cosine-similar row of G;
/// ties go to the smallest index. Zero-norm candidates score -inf, zero-norm
/// patches score 0 against every candidate.
std::vector<int> select_semantics(const Matrix& samples, const Matrix& patches);
RetrievedSemantics patch_retrieve(const SemanticSamples& samples, const PatchFeatures& patches);

/// Produces the visual prompt Z (N x K) from V and R.
ag::Var fuse(const ParameterStore& store, const VipConfig& cfg, const ag::Var& patches, const ag::Var& retrieved);

struct VisualPrompt {
    Matrix data;
};

PatchFeatures refine(const PatchFeatures& patches, const VisualPrompt& prompt);

/// Every intermediate of one forward pass, kept for inspection and gradients.
struct VipTrace {
    GaussianEstimate gaussian;
    Matrix noise;
    ag::Var samples;
    std::vector<int> indices;
    ag::Var retrieved;
    ag::Var prompt;
    ag::Var refined;
};

/// Full pipeline. The noise, the random additive term, and nothing else are
/// drawn from `rng`.
VipTrace vip_trace(const ParameterStore& store, const VipConfig& cfg, const TextFeature& text,
                   const ag::Var& patches, const Rng& rng);

/// Pipeline tail from already-estimated Gaussian parameters.
VipTrace vip_trace_from_gaussian(const ParameterStore& store, const VipConfig& cfg, GaussianEstimate gaussian,
                                 const ag::Var& patches, const Rng& rng);

PatchFeatures vip_forward(const ParameterStore& store, const VipConfig& cfg, const TextFeature& text,
                          const PatchFeatures& patches, const Rng& rng);

}  // namespace vipcap
