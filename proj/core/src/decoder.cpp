#include "vipcap/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "vipcap/error.hpp"
#include "vipcap/nn.hpp"

namespace vipcap {
namespace {

std::string layer_prefix(int i) { return fmt::format("decoder.layer{}", i); }
std::string adapter_prefix(int i) { return fmt::format("xattn.layer{}", i); }

RowVector log_softmax(const RowVector& logits) {
    const double mx = logits.maxCoeff();
    const double lse = mx + std::log((logits.array() - mx).exp().sum());
    return logits.array() - lse;
}

/// Indices of the `count` largest entries, descending, ties to the lower index.
std::vector<int> top_indices(const RowVector& scores, int count) {
    std::vector<int> idx(static_cast<std::size_t>(scores.size()));
    std::iota(idx.begin(), idx.end(), 0);
    const auto n = std::min<std::ptrdiff_t>(count, static_cast<std::ptrdiff_t>(idx.size()));
    std::partial_sort(idx.begin(), idx.begin() + n, idx.end(), [&](int a, int b) {
        if (scores(a) != scores(b)) return scores(a) > scores(b);
        return a < b;
    });
    idx.resize(static_cast<std::size_t>(n));
    return idx;
}

}  // namespace

void DecoderConfig::validate() const {
    require(vocab_size >= 5, ErrorKind::Config, "decoder: vocabulary must hold the specials plus one token");
    require(d_model >= 1 && num_layers >= 1 && max_context >= 2, ErrorKind::Config, "decoder: invalid shape");
    require(num_heads >= 1 && d_model % num_heads == 0, ErrorKind::Config,
            fmt::format("decoder: {} heads do not divide width {}", num_heads, d_model));
    require(mlp_mult > 0.0, ErrorKind::Config, "decoder: mlp_mult must be positive");
}

DecoderConfig DecoderConfig::gpt2_base() { return {50257, 768, 12, 12, 1024, 4.0}; }

ParameterLayout decoder_layout(const DecoderConfig& cfg, bool trainable) {
    cfg.validate();
    ParameterLayout layout;
    layout.push_back({"decoder.wte", cfg.vocab_size, cfg.d_model, trainable, Init::Normal, 0.02});
    layout.push_back({"decoder.wpe", cfg.max_context, cfg.d_model, trainable, Init::Normal, 0.01});
    const auto hidden = static_cast<Eigen::Index>(std::lround(cfg.mlp_mult * cfg.d_model));
    const nn::AttentionShape self{cfg.d_model, cfg.d_model, cfg.d_model, cfg.num_heads, cfg.d_model / cfg.num_heads};
    for (int i = 0; i < cfg.num_layers; ++i) {
        const std::string p = layer_prefix(i);
        nn::append_layer_norm(layout, p + ".ln1", cfg.d_model, trainable);
        nn::append_attention(layout, p + ".attn", self, trainable);
        nn::append_layer_norm(layout, p + ".ln2", cfg.d_model, trainable);
        nn::append_mlp(layout, p + ".mlp", cfg.d_model, hidden, cfg.d_model, trainable);
    }
    nn::append_layer_norm(layout, "decoder.ln_f", cfg.d_model, trainable);
    return layout;
}

ParameterLayout adapter_layout(const DecoderConfig& dec, const AdapterConfig& adapter, int image_dim,
                               bool trainable) {
    dec.validate();
    require(image_dim >= 1, ErrorKind::Config, "adapter: image_dim must be positive");
    ParameterLayout layout;
    const nn::AttentionShape shape{dec.d_model, image_dim, dec.d_model, adapter.num_heads, adapter.head_dim};
    for (int i = 0; i < dec.num_layers; ++i) {
        nn::append_attention(layout, adapter_prefix(i), shape, trainable, /*zero_output=*/true);
    }
    return layout;
}

std::vector<int> CaptionSequence::inputs() const { return {tokens.begin(), tokens.end() - 1}; }

std::vector<int> CaptionSequence::targets() const { return {tokens.begin() + 1, tokens.end()}; }

std::vector<bool> CaptionSequence::loss_mask() const {
    std::vector<bool> mask(tokens.size() - 1);
    for (std::size_t t = 0; t < mask.size(); ++t) mask[t] = t + 1 >= prefix_len;
    return mask;
}

std::size_t CaptionSequence::reference_length() const {
    return tokens.size() > prefix_len ? tokens.size() - prefix_len : 0;
}

std::vector<int> prompt_tokens(const Vocabulary& vocab, std::string_view prompt) {
    std::vector<int> out{Vocabulary::kBos};
    const auto ids = vocab.encode(prompt);
    out.insert(out.end(), ids.begin(), ids.end());
    return out;
}

CaptionSequence make_sequence(const Vocabulary& vocab, std::string_view prompt, std::string_view caption) {
    CaptionSequence seq;
    seq.tokens = prompt_tokens(vocab, prompt);
    seq.prefix_len = seq.tokens.size();
    const auto ids = vocab.encode(caption);
    seq.tokens.insert(seq.tokens.end(), ids.begin(), ids.end());
    seq.tokens.push_back(Vocabulary::kEos);
    return seq;
}

ag::Var forward_with_prompt(const ParameterStore& store, const DecoderConfig& dec, const AdapterConfig& adapter,
                            std::span<const int> tokens, const ag::Var& visual) {
    const auto t = static_cast<Eigen::Index>(tokens.size());
    require(t >= 1, ErrorKind::Input, "decoder: empty token sequence");
    require(t <= dec.max_context, ErrorKind::Input,
            fmt::format("decoder: {} tokens exceed context limit {}", t, dec.max_context));
    for (int id : tokens) {
        require(id >= 0 && id < dec.vocab_size, ErrorKind::Input, fmt::format("decoder: token {} out of range", id));
    }

    const ag::Var& wte = store.get("decoder.wte");
    ag::Var x = ag::gather_rows(wte, tokens) + ag::slice_rows(store.get("decoder.wpe"), 0, t);
    const int head_dim = dec.d_model / dec.num_heads;
    for (int i = 0; i < dec.num_layers; ++i) {
        const std::string p = layer_prefix(i);
        const ag::Var h = nn::layer_norm(store, p + ".ln1", x);
        x = x + nn::attention(store, p + ".attn", h, h, dec.num_heads, head_dim, /*causal=*/true);
        if (visual.defined()) {
            x = x + nn::attention(store, adapter_prefix(i), x, visual, adapter.num_heads, adapter.head_dim);
        }
        x = x + nn::mlp(store, p + ".mlp", nn::layer_norm(store, p + ".ln2", x));
    }
    x = nn::layer_norm(store, "decoder.ln_f", x);
    return ag::matmul_bt(x, wte);
}

Matrix token_distributions(const ag::Var& logits) {
    Matrix out(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) out.row(i) = log_softmax(logits.value().row(i)).array().exp();
    return out;
}

ag::Var caption_loss(const ag::Var& logits, const CaptionSequence& seq) {
    require(seq.tokens.size() >= 2, ErrorKind::Input, "caption_loss: sequence too short");
    require(logits.rows() == static_cast<Eigen::Index>(seq.tokens.size() - 1), ErrorKind::Config,
            "caption_loss: logits do not align with the sequence");
    require(seq.reference_length() > 0, ErrorKind::Input, "caption_loss: empty reference span");
    const auto targets = seq.targets();
    const auto mask = seq.loss_mask();
    return ag::cross_entropy(logits, targets, mask);
}

std::vector<int> greedy_search(const NextTokenScorer& scorer, std::vector<int> prefix, int eos, int max_len) {
    require(max_len >= 1, ErrorKind::Input, "generate: max_len must be >= 1");
    std::vector<int> out;
    for (int step = 0; step < max_len; ++step) {
        const RowVector logp = scorer(prefix);
        const int next = top_indices(logp, 1).front();
        if (next == eos) break;
        out.push_back(next);
        prefix.push_back(next);
    }
    return out;
}

std::vector<int> beam_search(const NextTokenScorer& scorer, std::vector<int> prefix, int eos, int max_len,
                             int width) {
    require(max_len >= 1, ErrorKind::Input, "generate: max_len must be >= 1");
    require(width >= 1, ErrorKind::Input, "generate: beam width must be >= 1");
    struct Beam {
        std::vector<int> tokens;
        double score = 0.0;
        bool done = false;
    };
    std::vector<Beam> beams{Beam{}};
    for (int step = 0; step < max_len; ++step) {
        std::vector<Beam> candidates;
        for (const Beam& b : beams) {
            if (b.done) {
                candidates.push_back(b);
                continue;
            }
            std::vector<int> history = prefix;
            history.insert(history.end(), b.tokens.begin(), b.tokens.end());
            const RowVector logp = scorer(history);
            for (int tok : top_indices(logp, width)) {
                Beam nb = b;
                nb.score += logp(tok);
                if (tok == eos) {
                    nb.done = true;
                } else {
                    nb.tokens.push_back(tok);
                }
                candidates.push_back(std::move(nb));
            }
        }
        std::stable_sort(candidates.begin(), candidates.end(),
                         [](const Beam& a, const Beam& b) { return a.score > b.score; });
        if (candidates.size() > static_cast<std::size_t>(width)) candidates.resize(static_cast<std::size_t>(width));
        beams = std::move(candidates);
        if (std::all_of(beams.begin(), beams.end(), [](const Beam& b) { return b.done; })) break;
    }
    return beams.front().tokens;
}

std::vector<int> generate_tokens(const ParameterStore& store, const DecoderConfig& dec,
                                 const AdapterConfig& adapter, std::vector<int> prefix, const ag::Var& visual,
                                 const DecodeStrategy& strategy, int max_len, int vocab_limit) {
    require(!prefix.empty(), ErrorKind::Input, "generate: empty prefix");
    const int room = dec.max_context - static_cast<int>(prefix.size()) + 1;
    require(room >= 1, ErrorKind::Input, "generate: prompt fills the decoder context");
    max_len = std::min(max_len, room);

    ag::NoGradGuard guard;
    NextTokenScorer scorer = [&](const std::vector<int>& history) {
        const ag::Var logits = forward_with_prompt(store, dec, adapter, history, visual);
        RowVector last = logits.value().row(logits.rows() - 1);
        if (vocab_limit > 0 && vocab_limit < last.size()) {
            last.tail(last.size() - vocab_limit).setConstant(-std::numeric_limits<double>::infinity());
        }
        return log_softmax(last);
    };
    if (strategy.kind == DecodeStrategy::Kind::Beam) {
        return beam_search(scorer, std::move(prefix), Vocabulary::kEos, max_len, strategy.beam_width);
    }
    return greedy_search(scorer, std::move(prefix), Vocabulary::kEos, max_len);
}

}  // namespace vipcap
