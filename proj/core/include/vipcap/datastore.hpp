#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "vipcap/matrix.hpp"

namespace vipcap {

struct CaptionEntry {
    std::string id;
    std::string text;
    RowVector embedding;
};

struct RetrievalConfig {
    int k = 3;
};

struct Retrieved {
    const CaptionEntry* entry = nullptr;
    double similarity = 0.0;
};

/// Exact cosine-similarity index over caption embeddings. Immutable after
/// construction; concurrent queries are safe.
class EmbeddingIndex {
public:
    /// Throws a build error on an empty list, duplicate ids, inconsistent
    /// dimensions, or empty caption text.
    explicit EmbeddingIndex(std::vector<CaptionEntry> entries);

    std::size_t size() const noexcept { return entries_.size(); }
    Eigen::Index dim() const noexcept { return normalized_.cols(); }
    const std::vector<CaptionEntry>& entries() const noexcept { return entries_; }

    /// Top-k by descending cosine similarity, ties by ascending id.
    std::vector<Retrieved> retrieve_topk(const RowVector& query, const RetrievalConfig& cfg) const;

private:
    std::vector<CaptionEntry> entries_;
    Matrix normalized_;  // unit rows; zero rows stay zero
};

EmbeddingIndex build_index(std::vector<CaptionEntry> entries);

struct PromptTemplate {
    std::string prefix = "Similar images show";
    std::string separator = ", ";
    std::string suffix = ". This image shows";

    std::string render(const std::vector<std::string>& captions) const;
};

/// Renders the hard prompt. Captions are dropped from the end until the
/// prompt fits `token_budget`; a lone caption that still overflows is cut
/// token-wise, and if even the bare template overflows the rendered text is
/// hard-truncated.
std::string format_prompt(const std::vector<std::string>& captions, const PromptTemplate& tmpl,
                          std::size_t token_budget);

/// captions.jsonl ({"id", "text"} per line) + embeddings.bin (VIPC, same row order).
std::vector<CaptionEntry> load_caption_entries(const std::filesystem::path& captions_jsonl,
                                               const std::filesystem::path& embeddings_bin);
/// Writes captions.jsonl and embeddings.bin under `dir`.
void save_datastore(const std::filesystem::path& dir, const std::vector<CaptionEntry>& entries);
EmbeddingIndex load_datastore(const std::filesystem::path& dir);

}  // namespace vipcap
