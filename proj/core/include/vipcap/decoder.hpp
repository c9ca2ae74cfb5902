#pragma once

// Frozen autoregressive decoder with trainable cross-attention adapters that
// read the refined visual features V'.
//
// Per layer: x += SelfAttn(LN1(x)) [causal]; x += XAttn(x, V'); x += MLP(LN2(x)).
// Logits use the tied token embedding. Adapter output projections start at
// zero, so an untrained adapter leaves the frozen decoder's logits unchanged.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "vipcap/autograd.hpp"
#include "vipcap/params.hpp"
#include "vipcap/tokenizer.hpp"

namespace vipcap {

struct DecoderConfig {
    int vocab_size = 512;
    int d_model = 128;
    int num_layers = 2;
    int num_heads = 4;
    int max_context = 128;
    double mlp_mult = 4.0;

    void validate() const;
    /// GPT-2 base: 12 layers, 768 wide, 12 heads, 1024 positions, 50257 tokens.
    static DecoderConfig gpt2_base();
};

struct AdapterConfig {
    int num_heads = 12;
    int head_dim = 16;
};

/// decoder.wte, decoder.wpe, decoder.layer{i}.*, decoder.ln_f
ParameterLayout decoder_layout(const DecoderConfig& cfg, bool trainable = false);
/// xattn.layer{i}.{q|k|v|o}.{weight|bias}
ParameterLayout adapter_layout(const DecoderConfig& dec, const AdapterConfig& adapter, int image_dim,
                               bool trainable = true);

/// One training sequence: [BOS] prompt caption [EOS]. Positions before
/// `prefix_len` are conditioning only.
struct CaptionSequence {
    std::vector<int> tokens;
    std::size_t prefix_len = 1;

    /// Inputs are tokens[0..T-1), targets tokens[1..T).
    std::vector<int> inputs() const;
    std::vector<int> targets() const;
    std::vector<bool> loss_mask() const;
    std::size_t reference_length() const;
};

CaptionSequence make_sequence(const Vocabulary& vocab, std::string_view prompt, std::string_view caption);
std::vector<int> prompt_tokens(const Vocabulary& vocab, std::string_view prompt);

/// Logits (T x vocab) for `tokens`. `visual` is V' (N x K); when undefined the
/// adapters are skipped and the decoder runs text-only.
ag::Var forward_with_prompt(const ParameterStore& store, const DecoderConfig& dec, const AdapterConfig& adapter,
                            std::span<const int> tokens, const ag::Var& visual);

/// Row-wise softmax of logits.
Matrix token_distributions(const ag::Var& logits);

/// Mean negative log-likelihood over reference tokens (the caption and EOS).
ag::Var caption_loss(const ag::Var& logits, const CaptionSequence& seq);

struct DecodeStrategy {
    enum class Kind { Greedy, Beam } kind = Kind::Greedy;
    int beam_width = 1;

    static DecodeStrategy greedy() { return {}; }
    static DecodeStrategy beam(int width) { return {Kind::Beam, width}; }
};

/// Token ids of the continuation after `prefix` (EOS excluded). When
/// `vocab_limit` > 0, ids at or above it are never emitted.
std::vector<int> generate_tokens(const ParameterStore& store, const DecoderConfig& dec,
                                 const AdapterConfig& adapter, std::vector<int> prefix, const ag::Var& visual,
                                 const DecodeStrategy& strategy, int max_len, int vocab_limit = 0);

/// Logit function abstraction used by the search routines: given the full
/// token history, returns the next-token log-probabilities.
using NextTokenScorer = std::function<RowVector(const std::vector<int>&)>;

std::vector<int> greedy_search(const NextTokenScorer& scorer, std::vector<int> prefix, int eos, int max_len);
std::vector<int> beam_search(const NextTokenScorer& scorer, std::vector<int> prefix, int eos, int max_len,
                             int width);

}  // namespace vipcap
