#include "vipcap/vip.hpp"

#include <cmath>
#include <limits>
#include <string>

#include <fmt/format.h>

#include "vipcap/error.hpp"
#include "vipcap/nn.hpp"

namespace vipcap {
namespace {

constexpr const char* kHeadMu = "vip.h_mu";
constexpr const char* kHeadSigma = "vip.h_sigma";
constexpr const char* kOmega = "vip.omega_add";

int mlp_hidden(const VipConfig& cfg) {
    return std::max(1, static_cast<int>(std::lround(cfg.ffn.hidden_mult * cfg.image_dim)));
}

void append_head(ParameterLayout& layout, const std::string& prefix, const VipConfig& cfg, bool trainable) {
    Eigen::Index in = cfg.text_dim;
    for (int layer = 0; layer < cfg.head_layers; ++layer) {
        nn::append_linear(layout, fmt::format("{}.{}", prefix, layer), in, cfg.image_dim, trainable);
        in = cfg.image_dim;
    }
}

ag::Var run_head(const ParameterStore& store, const std::string& prefix, const VipConfig& cfg, ag::Var x) {
    for (int layer = 0; layer < cfg.head_layers; ++layer) {
        if (layer > 0) x = ag::gelu(x);
        x = nn::linear(store, fmt::format("{}.{}", prefix, layer), x);
    }
    return x;
}

Matrix additive_draw(NoiseVariant v, int dim, Rng& rng) {
    Matrix out(1, dim);
    for (int k = 0; k < dim; ++k) {
        switch (v) {
            case NoiseVariant::Gauss: out(0, k) = rng.normal(); break;
            case NoiseVariant::UnifSym: out(0, k) = rng.uniform(-1.0, 1.0); break;
            case NoiseVariant::UnifGauss: {
                const double u = rng.uniform(0.0, 1.0);
                out(0, k) = u * rng.normal();
                break;
            }
            default: out(0, k) = 0.0; break;
        }
    }
    return out;
}

}  // namespace

std::string_view to_string(NoiseVariant v) noexcept {
    switch (v) {
        case NoiseVariant::None: return "none";
        case NoiseVariant::Gauss: return "gauss";
        case NoiseVariant::UnifSym: return "unif_sym";
        case NoiseVariant::UnifGauss: return "unif_gauss";
        case NoiseVariant::LearnableScaled: return "learnable_scaled";
    }
    return "none";
}

std::string_view to_string(FusionVariant v) noexcept {
    switch (v) {
        case FusionVariant::Sum: return "sum";
        case FusionVariant::Concat: return "concat";
        case FusionVariant::MlpSum: return "mlp_sum";
        case FusionVariant::MlpConcat: return "mlp_concat";
        case FusionVariant::Attention: return "attention";
    }
    return "attention";
}

NoiseVariant parse_noise_variant(std::string_view name) {
    for (auto v : {NoiseVariant::None, NoiseVariant::Gauss, NoiseVariant::UnifSym, NoiseVariant::UnifGauss,
                   NoiseVariant::LearnableScaled}) {
        if (to_string(v) == name) return v;
    }
    fail(ErrorKind::Input, fmt::format("unknown noise variant '{}'", name));
}

FusionVariant parse_fusion_variant(std::string_view name) {
    for (auto v : {FusionVariant::Sum, FusionVariant::Concat, FusionVariant::MlpSum, FusionVariant::MlpConcat,
                   FusionVariant::Attention}) {
        if (to_string(v) == name) return v;
    }
    fail(ErrorKind::Input, fmt::format("unknown ffn variant '{}'", name));
}

int FFNConfig::resolved_head_dim(int image_dim) const {
    if (head_dim > 0) return head_dim;
    require(num_heads > 0 && image_dim % num_heads == 0, ErrorKind::Config,
            fmt::format("{} heads do not divide width {}", num_heads, image_dim));
    return image_dim / num_heads;
}

void FFNConfig::validate(int image_dim) const {
    require(num_layers == 1, ErrorKind::Config,
            fmt::format("fusion network supports a single layer (got {})", num_layers));
    require(num_heads >= 1, ErrorKind::Config, "fusion network needs at least one head");
    require(head_dim >= 0, ErrorKind::Config, "head_dim must be non-negative");
    require(hidden_mult > 0.0, ErrorKind::Config, "hidden_mult must be positive");
    (void)resolved_head_dim(image_dim);
}

void VipConfig::validate() const {
    require(image_dim >= 1 && text_dim >= 1, ErrorKind::Config, "vip: dimensions must be positive");
    require(head_layers >= 1, ErrorKind::Config, "vip: head needs at least one layer");
    require(alpha >= 0.0, ErrorKind::Config, fmt::format("vip: alpha must be >= 0 (got {})", alpha));
    require(sigma_floor >= 0.0, ErrorKind::Config, "vip: sigma floor must be >= 0");
    require(num_samples >= 1, ErrorKind::Input, fmt::format("vip: M must be >= 1 (got {})", num_samples));
    ffn.validate(image_dim);
}

ParameterLayout vip_layout(const VipConfig& cfg, bool trainable) {
    cfg.validate();
    ParameterLayout layout;
    append_head(layout, kHeadMu, cfg, trainable);
    append_head(layout, kHeadSigma, cfg, trainable);
    if (cfg.has_omega()) layout.push_back({kOmega, 1, cfg.image_dim, trainable, Init::Normal, 0.02});

    const Eigen::Index k = cfg.image_dim;
    const int hidden = mlp_hidden(cfg);
    switch (cfg.ffn.variant) {
        case FusionVariant::Sum: break;
        case FusionVariant::Concat: nn::append_linear(layout, "vip.ffn.proj", 2 * k, k, trainable); break;
        case FusionVariant::MlpSum: nn::append_mlp(layout, "vip.ffn.mlp", k, hidden, k, trainable); break;
        case FusionVariant::MlpConcat:
            nn::append_mlp(layout, "vip.ffn.mlp", k, hidden, k, trainable);
            nn::append_linear(layout, "vip.ffn.proj", 2 * k, k, trainable);
            break;
        case FusionVariant::Attention: {
            const nn::AttentionShape shape{k, k, k, cfg.ffn.num_heads, cfg.ffn.resolved_head_dim(cfg.image_dim)};
            nn::append_layer_norm(layout, "vip.ffn.ln_self", k, trainable);
            nn::append_attention(layout, "vip.ffn.self_attn", shape, trainable);
            nn::append_layer_norm(layout, "vip.ffn.ln_cross", k, trainable);
            nn::append_layer_norm(layout, "vip.ffn.ln_mem", k, trainable);
            nn::append_attention(layout, "vip.ffn.cross_attn", shape, trainable);
            nn::append_layer_norm(layout, "vip.ffn.ln_mlp", k, trainable);
            nn::append_mlp(layout, "vip.ffn.mlp", k, hidden, k, trainable);
            break;
        }
    }
    return layout;
}

ag::Var positive_sigma(const ag::Var& pre, double floor) { return ag::add_scalar(ag::softplus(pre), floor); }

GaussianEstimate estimate_gaussian(const ParameterStore& store, const VipConfig& cfg, const TextFeature& text,
                                   Rng* noise_rng) {
    require(text.size() == cfg.text_dim, ErrorKind::Config,
            fmt::format("text feature has {} dims, head expects {}", text.size(), cfg.text_dim));
    const ag::Var x = ag::constant(text.data);

    GaussianEstimate out;
    out.mu = run_head(store, kHeadMu, cfg, x);
    switch (cfg.noise) {
        case NoiseVariant::None: break;
        case NoiseVariant::LearnableScaled:
            if (cfg.use_omega) out.mu = out.mu + ag::scale(store.get(kOmega), cfg.omega_scale());
            break;
        default: {
            require(noise_rng != nullptr, ErrorKind::Config,
                    fmt::format("noise variant '{}' needs a random stream", to_string(cfg.noise)));
            out.mu = out.mu + ag::constant(additive_draw(cfg.noise, cfg.image_dim, *noise_rng));
            break;
        }
    }
    out.sigma_pre = run_head(store, kHeadSigma, cfg, x);
    out.sigma = positive_sigma(out.sigma_pre, cfg.sigma_floor);

    require(out.mu.value().allFinite() && out.sigma.value().allFinite(), ErrorKind::Numeric,
            "estimate_gaussian: non-finite activations");
    return out;
}

Matrix draw_standard_normal(int rows, int cols, Rng& rng) {
    require(rows >= 1, ErrorKind::Input, fmt::format("sample count must be >= 1 (got {})", rows));
    Matrix out(rows, cols);
    for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = rng.normal();
    return out;
}

SemanticSamples sample_semantics(const GaussianParams& params, int num_samples, Rng& rng) {
    require(params.mu.size() == params.sigma.size(), ErrorKind::Config, "sample_semantics: mu/sigma mismatch");
    SemanticSamples out;
    out.noise = draw_standard_normal(num_samples, static_cast<int>(params.mu.size()), rng);
    ag::NoGradGuard guard;
    out.data = sample_semantics(ag::constant(params.mu), ag::constant(params.sigma), out.noise).value();
    return out;
}

ag::Var sample_semantics(const ag::Var& mu, const ag::Var& sigma, const Matrix& noise) {
    return ag::affine_rows(mu, sigma, noise);
}

std::vector<int> select_semantics(const Matrix& samples, const Matrix& patches) {
    require(samples.cols() == patches.cols(), ErrorKind::Config,
            fmt::format("patch_retrieve: sample width {} != patch width {}", samples.cols(), patches.cols()));
    require(samples.rows() >= 1, ErrorKind::Input, "patch_retrieve: no candidates");

    const Eigen::VectorXd g_norm = samples.rowwise().norm();
    const Eigen::VectorXd v_norm = patches.rowwise().norm();
    const Matrix dots = patches * samples.transpose();  // N x M

    std::vector<int> out(static_cast<std::size_t>(patches.rows()), 0);
    for (Eigen::Index j = 0; j < patches.rows(); ++j) {
        double best = -std::numeric_limits<double>::infinity();
        int best_i = 0;
        for (Eigen::Index i = 0; i < samples.rows(); ++i) {
            double sim;
            if (g_norm(i) == 0.0) {
                sim = -std::numeric_limits<double>::infinity();
            } else if (v_norm(j) == 0.0) {
                sim = 0.0;
            } else {
                sim = dots(j, i) / (g_norm(i) * v_norm(j));
            }
            if (sim > best) {
                best = sim;
                best_i = static_cast<int>(i);
            }
        }
        out[static_cast<std::size_t>(j)] = best_i;
    }
    return out;
}

RetrievedSemantics patch_retrieve(const SemanticSamples& samples, const PatchFeatures& patches) {
    RetrievedSemantics out;
    out.indices = select_semantics(samples.data, patches.data);
    out.data.resize(patches.rows(), samples.data.cols());
    for (std::size_t j = 0; j < out.indices.size(); ++j) {
        out.data.row(static_cast<Eigen::Index>(j)) = samples.data.row(out.indices[j]);
    }
    return out;
}

ag::Var fuse(const ParameterStore& store, const VipConfig& cfg, const ag::Var& patches, const ag::Var& retrieved) {
    require(patches.cols() == cfg.image_dim, ErrorKind::Config,
            fmt::format("fuse: patch width {} != K={}", patches.cols(), cfg.image_dim));
    require(retrieved.cols() == cfg.image_dim, ErrorKind::Config,
            fmt::format("fuse: semantic width {} != K={}", retrieved.cols(), cfg.image_dim));
    const FFNConfig& ffn = cfg.ffn;
    ffn.validate(cfg.image_dim);

    auto same_rows = [&] {
        require(patches.rows() == retrieved.rows(), ErrorKind::Config,
                fmt::format("fuse: {} variant needs R with N={} rows (got {})", to_string(ffn.variant),
                            patches.rows(), retrieved.rows()));
    };

    switch (ffn.variant) {
        case FusionVariant::Sum: same_rows(); return patches + retrieved;
        case FusionVariant::Concat: {
            same_rows();
            const ag::Var parts[] = {patches, retrieved};
            return nn::linear(store, "vip.ffn.proj", ag::concat_cols(parts));
        }
        case FusionVariant::MlpSum: same_rows(); return patches + nn::mlp(store, "vip.ffn.mlp", retrieved);
        case FusionVariant::MlpConcat: {
            same_rows();
            const ag::Var parts[] = {patches, nn::mlp(store, "vip.ffn.mlp", retrieved)};
            return nn::linear(store, "vip.ffn.proj", ag::concat_cols(parts));
        }
        case FusionVariant::Attention: break;
    }

    // Pre-norm block: self-attention over V, cross-attention into R, MLP.
    const int heads = ffn.num_heads;
    const int head_dim = ffn.resolved_head_dim(cfg.image_dim);
    ag::Var h = patches;
    {
        const ag::Var x = nn::layer_norm(store, "vip.ffn.ln_self", h);
        h = h + nn::attention(store, "vip.ffn.self_attn", x, x, heads, head_dim);
    }
    {
        const ag::Var q = nn::layer_norm(store, "vip.ffn.ln_cross", h);
        const ag::Var mem = nn::layer_norm(store, "vip.ffn.ln_mem", retrieved);
        h = h + nn::attention(store, "vip.ffn.cross_attn", q, mem, heads, head_dim);
    }
    h = h + nn::mlp(store, "vip.ffn.mlp", nn::layer_norm(store, "vip.ffn.ln_mlp", h));
    return h;
}

PatchFeatures refine(const PatchFeatures& patches, const VisualPrompt& prompt) {
    require(patches.data.rows() == prompt.data.rows() && patches.data.cols() == prompt.data.cols(),
            ErrorKind::Config,
            fmt::format("refine: V is {}x{}, Z is {}x{}", patches.rows(), patches.cols(), prompt.data.rows(),
                        prompt.data.cols()));
    return {patches.data + prompt.data};
}

VipTrace vip_trace_from_gaussian(const ParameterStore& store, const VipConfig& cfg, GaussianEstimate gaussian,
                                 const ag::Var& patches, const Rng& rng) {
    require(patches.cols() == cfg.image_dim, ErrorKind::Config,
            fmt::format("vip: patch width {} != K={}", patches.cols(), cfg.image_dim));
    VipTrace t;
    t.gaussian = std::move(gaussian);
    Rng eps_rng = rng.split("eps");
    t.noise = draw_standard_normal(cfg.num_samples, cfg.image_dim, eps_rng);
    t.samples = sample_semantics(t.gaussian.mu, t.gaussian.sigma, t.noise);

    if (cfg.use_patch_retrieval) {
        t.indices = select_semantics(t.samples.value(), patches.value());
    } else {
        // Without selection each patch takes draws in sampling order.
        t.indices.resize(static_cast<std::size_t>(patches.rows()));
        for (std::size_t j = 0; j < t.indices.size(); ++j) t.indices[j] = static_cast<int>(j % cfg.num_samples);
    }
    t.retrieved = ag::gather_rows(t.samples, t.indices);
    t.prompt = fuse(store, cfg, patches, t.retrieved);
    t.refined = patches + t.prompt;
    require(t.refined.value().allFinite(), ErrorKind::Numeric, "vip: non-finite refined features");
    return t;
}

VipTrace vip_trace(const ParameterStore& store, const VipConfig& cfg, const TextFeature& text,
                   const ag::Var& patches, const Rng& rng) {
    Rng additive = rng.split("additive");
    GaussianEstimate g = estimate_gaussian(store, cfg, text, &additive);
    return vip_trace_from_gaussian(store, cfg, std::move(g), patches, rng);
}

PatchFeatures vip_forward(const ParameterStore& store, const VipConfig& cfg, const TextFeature& text,
                          const PatchFeatures& patches, const Rng& rng) {
    ag::NoGradGuard guard;
    return {vip_trace(store, cfg, text, ag::constant(patches.data), rng).refined.value()};
}

}  // namespace vipcap
