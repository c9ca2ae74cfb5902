#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace vipcap {

/// One candidate and at least one reference per image, aligned by position.
struct EvalCorpus {
    std::vector<std::string> ids;
    std::vector<std::string> candidates;
    std::vector<std::vector<std::string>> references;

    std::size_t size() const noexcept { return candidates.size(); }
    void validate() const;
};

/// Lowercase, drop ASCII punctuation, split on whitespace.
std::vector<std::string> metric_tokens(std::string_view text);

struct BleuStats {
    std::array<double, 4> precisions{};  // modified n-gram precisions, n = 1..4
    double brevity_penalty = 1.0;
    std::size_t candidate_length = 0;
    std::size_t reference_length = 0;  // closest reference length, ties to the shorter
    double score = 0.0;
};

/// Corpus-level BLEU-4, uniform weights, no smoothing.
BleuStats bleu4_stats(const EvalCorpus& corpus);
double bleu4(const EvalCorpus& corpus);

inline constexpr double kCiderSigma = 6.0;

/// CIDEr-D per image (clipped TF-IDF n-gram cosine, n = 1..4, Gaussian length
/// penalty, x10). Document frequencies come from the references; needs at
/// least two images.
std::vector<double> cider_scores(const EvalCorpus& corpus);
double cider(const EvalCorpus& corpus);

/// Predictions: {"id", "caption"} per line, one per id. References:
/// {"id", "caption"} (repeatable) or {"id", "captions": [...]}.
EvalCorpus load_eval_corpus(const std::filesystem::path& predictions, const std::filesystem::path& references);

}  // namespace vipcap
