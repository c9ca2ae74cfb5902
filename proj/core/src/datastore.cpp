#include "vipcap/datastore.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <unordered_set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "vipcap/error.hpp"
#include "vipcap/features_io.hpp"
#include "vipcap/tokenizer.hpp"

namespace vipcap {

EmbeddingIndex::EmbeddingIndex(std::vector<CaptionEntry> entries) : entries_(std::move(entries)) {
    require(!entries_.empty(), ErrorKind::Build, "datastore: no entries");
    const Eigen::Index dim = entries_.front().embedding.size();
    require(dim > 0, ErrorKind::Build, "datastore: empty embedding");
    std::unordered_set<std::string> seen;
    normalized_.resize(static_cast<Eigen::Index>(entries_.size()), dim);
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const CaptionEntry& e = entries_[i];
        require(seen.insert(e.id).second, ErrorKind::Build, fmt::format("datastore: duplicate id '{}'", e.id));
        require(!e.text.empty(), ErrorKind::Build, fmt::format("datastore: empty caption for '{}'", e.id));
        require(e.embedding.size() == dim, ErrorKind::Build,
                fmt::format("datastore: '{}' has {} dims, expected {}", e.id, e.embedding.size(), dim));
        require(e.embedding.allFinite(), ErrorKind::Build, fmt::format("datastore: '{}' is non-finite", e.id));
        const double norm = e.embedding.norm();
        const auto row = static_cast<Eigen::Index>(i);
        normalized_.row(row) = norm > 0.0 ? RowVector(e.embedding / norm) : RowVector::Zero(dim);
    }
}

std::vector<Retrieved> EmbeddingIndex::retrieve_topk(const RowVector& query, const RetrievalConfig& cfg) const {
    require(query.size() == dim(), ErrorKind::Input,
            fmt::format("retrieve_topk: query has {} dims, index has {}", query.size(), dim()));
    require(cfg.k >= 0, ErrorKind::Input, "retrieve_topk: k must be >= 0");
    require(static_cast<std::size_t>(cfg.k) <= size(), ErrorKind::Input,
            fmt::format("retrieve_topk: k={} exceeds store size {}", cfg.k, size()));
    if (cfg.k == 0) return {};

    const double qn = query.norm();
    Eigen::VectorXd sims = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(size()));
    if (qn > 0.0) sims = normalized_ * (query.transpose() / qn);

    std::vector<std::size_t> order(size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto k = static_cast<std::ptrdiff_t>(cfg.k);
    std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](std::size_t a, std::size_t b) {
        const double sa = sims(static_cast<Eigen::Index>(a));
        const double sb = sims(static_cast<Eigen::Index>(b));
        if (sa != sb) return sa > sb;
        return entries_[a].id < entries_[b].id;
    });

    std::vector<Retrieved> out;
    out.reserve(static_cast<std::size_t>(cfg.k));
    for (std::ptrdiff_t i = 0; i < k; ++i) {
        const std::size_t at = order[static_cast<std::size_t>(i)];
        out.push_back({&entries_[at], sims(static_cast<Eigen::Index>(at))});
    }
    return out;
}

EmbeddingIndex build_index(std::vector<CaptionEntry> entries) { return EmbeddingIndex(std::move(entries)); }

std::string PromptTemplate::render(const std::vector<std::string>& captions) const {
    if (captions.empty()) {
        // ". This image shows" -> "This image shows"
        const auto first = suffix.find_first_not_of(". ");
        return first == std::string::npos ? std::string{} : suffix.substr(first);
    }
    std::string out = prefix + " ";
    for (std::size_t i = 0; i < captions.size(); ++i) {
        if (i > 0) out += separator;
        out += captions[i];
    }
    return out + suffix;
}

std::string format_prompt(const std::vector<std::string>& captions, const PromptTemplate& tmpl,
                          std::size_t token_budget) {
    require(token_budget >= 1, ErrorKind::Input, "format_prompt: token budget must be >= 1");
    std::vector<std::string> kept = captions;
    while (kept.size() > 1 && count_tokens(tmpl.render(kept)) > token_budget) kept.pop_back();

    std::string rendered = tmpl.render(kept);
    if (count_tokens(rendered) <= token_budget) return rendered;

    if (kept.size() == 1) {
        const std::size_t frame = count_tokens(tmpl.render({"x"})) - 1;
        if (frame < token_budget) {
            const std::string cut(truncate_tokens(kept.front(), token_budget - frame));
            rendered = tmpl.render({cut});
            if (count_tokens(rendered) <= token_budget) return rendered;
        }
        rendered = tmpl.render({});
    }
    return std::string(truncate_tokens(rendered, token_budget));
}

std::vector<CaptionEntry> load_caption_entries(const std::filesystem::path& captions_jsonl,
                                               const std::filesystem::path& embeddings_bin) {
    std::ifstream in(captions_jsonl);
    require(in.good(), ErrorKind::Io, fmt::format("cannot open '{}'", captions_jsonl.string()));
    std::vector<CaptionEntry> entries;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
            entries.push_back({j.at("id").get<std::string>(), j.at("text").get<std::string>(), {}});
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::Decode, fmt::format("{}:{}: {}", captions_jsonl.string(), line_no, e.what()));
        }
    }
    const Matrix emb = read_features(embeddings_bin);
    require(static_cast<std::size_t>(emb.rows()) == entries.size(), ErrorKind::Build,
            fmt::format("datastore: {} captions but {} embedding rows", entries.size(), emb.rows()));
    for (std::size_t i = 0; i < entries.size(); ++i) entries[i].embedding = emb.row(static_cast<Eigen::Index>(i));
    return entries;
}

void save_datastore(const std::filesystem::path& dir, const std::vector<CaptionEntry>& entries) {
    require(!entries.empty(), ErrorKind::Build, "datastore: no entries");
    std::filesystem::create_directories(dir);
    std::ofstream out(dir / "captions.jsonl");
    require(out.good(), ErrorKind::Io, fmt::format("cannot write '{}'", (dir / "captions.jsonl").string()));
    Matrix emb(static_cast<Eigen::Index>(entries.size()), entries.front().embedding.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
        out << nlohmann::json{{"id", entries[i].id}, {"text", entries[i].text}}.dump() << '\n';
        require(entries[i].embedding.size() == emb.cols(), ErrorKind::Build, "datastore: inconsistent dims");
        emb.row(static_cast<Eigen::Index>(i)) = entries[i].embedding;
    }
    write_features(dir / "embeddings.bin", emb);
}

EmbeddingIndex load_datastore(const std::filesystem::path& dir) {
    return build_index(load_caption_entries(dir / "captions.jsonl", dir / "embeddings.bin"));
}

}  // namespace vipcap
