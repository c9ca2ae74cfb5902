#include "vipcap/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "vipcap/error.hpp"

namespace vipcap {
namespace {

using NGram = std::vector<std::string>;
using NGramCounts = std::map<NGram, double>;

NGramCounts count_ngrams(const std::vector<std::string>& words, std::size_t n) {
    NGramCounts out;
    if (words.size() < n) return out;
    for (std::size_t i = 0; i + n <= words.size(); ++i) out[NGram(words.begin() + i, words.begin() + i + n)] += 1.0;
    return out;
}

struct TfIdf {
    std::array<NGramCounts, 4> vec;
    std::array<double, 4> norm{};
    double length = 0.0;
};

TfIdf to_tfidf(const std::vector<std::string>& words, const std::map<NGram, double>& doc_freq, double log_images) {
    TfIdf out;
    out.length = static_cast<double>(words.size());
    for (std::size_t n = 1; n <= 4; ++n) {
        for (const auto& [gram, tf] : count_ngrams(words, n)) {
            auto it = doc_freq.find(gram);
            const double df = std::log(std::max(1.0, it == doc_freq.end() ? 0.0 : it->second));
            const double w = tf * (log_images - df);
            out.vec[n - 1][gram] = w;
            out.norm[n - 1] += w * w;
        }
        out.norm[n - 1] = std::sqrt(out.norm[n - 1]);
    }
    return out;
}

double cider_sim(const TfIdf& hyp, const TfIdf& ref, std::size_t n) {
    double val = 0.0;
    for (const auto& [gram, w] : hyp.vec[n]) {
        auto it = ref.vec[n].find(gram);
        if (it == ref.vec[n].end()) continue;
        val += std::min(w, it->second) * it->second;
    }
    if (hyp.norm[n] != 0.0 && ref.norm[n] != 0.0) val /= hyp.norm[n] * ref.norm[n];
    const double delta = hyp.length - ref.length;
    return val * std::exp(-(delta * delta) / (2.0 * kCiderSigma * kCiderSigma));
}

}  // namespace

void EvalCorpus::validate() const {
    require(!candidates.empty(), ErrorKind::Input, "eval: empty corpus");
    require(references.size() == candidates.size(), ErrorKind::Input, "eval: candidates/references misaligned");
    require(ids.empty() || ids.size() == candidates.size(), ErrorKind::Input, "eval: ids misaligned");
    for (std::size_t i = 0; i < references.size(); ++i) {
        require(!references[i].empty(), ErrorKind::Input,
                fmt::format("eval: image '{}' has no references", ids.empty() ? std::to_string(i) : ids[i]));
    }
}

std::vector<std::string> metric_tokens(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isspace(c) != 0) {
            if (!cur.empty()) out.push_back(std::move(cur));
            cur.clear();
        } else if (std::ispunct(c) == 0) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

BleuStats bleu4_stats(const EvalCorpus& corpus) {
    corpus.validate();
    std::array<double, 4> matched{};
    std::array<double, 4> total{};
    BleuStats stats;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const auto cand = metric_tokens(corpus.candidates[i]);
        std::vector<std::vector<std::string>> refs;
        for (const auto& r : corpus.references[i]) refs.push_back(metric_tokens(r));

        stats.candidate_length += cand.size();
        std::size_t best = refs.front().size();
        for (const auto& r : refs) {
            const auto diff = [&](std::size_t len) {
                return len > cand.size() ? len - cand.size() : cand.size() - len;
            };
            if (diff(r.size()) < diff(best) || (diff(r.size()) == diff(best) && r.size() < best)) best = r.size();
        }
        stats.reference_length += best;

        for (std::size_t n = 1; n <= 4; ++n) {
            const auto cand_counts = count_ngrams(cand, n);
            NGramCounts max_ref;
            for (const auto& r : refs) {
                for (const auto& [g, c] : count_ngrams(r, n)) max_ref[g] = std::max(max_ref[g], c);
            }
            for (const auto& [g, c] : cand_counts) {
                total[n - 1] += c;
                auto it = max_ref.find(g);
                if (it != max_ref.end()) matched[n - 1] += std::min(c, it->second);
            }
        }
    }

    double log_sum = 0.0;
    bool zero = false;
    for (std::size_t n = 0; n < 4; ++n) {
        stats.precisions[n] = total[n] > 0.0 ? matched[n] / total[n] : 0.0;
        if (stats.precisions[n] == 0.0) {
            zero = true;
        } else {
            log_sum += std::log(stats.precisions[n]);
        }
    }
    const auto c = static_cast<double>(stats.candidate_length);
    const auto r = static_cast<double>(stats.reference_length);
    stats.brevity_penalty = c >= r ? 1.0 : (c == 0.0 ? 0.0 : std::exp(1.0 - r / c));
    stats.score = zero ? 0.0 : stats.brevity_penalty * std::exp(log_sum / 4.0);
    return stats;
}

double bleu4(const EvalCorpus& corpus) { return bleu4_stats(corpus).score; }

std::vector<double> cider_scores(const EvalCorpus& corpus) {
    corpus.validate();
    require(corpus.size() >= 2, ErrorKind::Input, "cider: needs at least two images for document frequencies");

    std::vector<std::vector<std::vector<std::string>>> refs(corpus.size());
    std::map<NGram, double> doc_freq;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        std::set<NGram> seen;
        for (const auto& r : corpus.references[i]) {
            refs[i].push_back(metric_tokens(r));
            for (std::size_t n = 1; n <= 4; ++n) {
                for (const auto& [g, _] : count_ngrams(refs[i].back(), n)) seen.insert(g);
            }
        }
        for (const auto& g : seen) doc_freq[g] += 1.0;
    }

    const double log_images = std::log(static_cast<double>(corpus.size()));
    std::vector<double> out(corpus.size(), 0.0);
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const TfIdf hyp = to_tfidf(metric_tokens(corpus.candidates[i]), doc_freq, log_images);
        std::array<double, 4> acc{};
        for (const auto& r : refs[i]) {
            const TfIdf ref = to_tfidf(r, doc_freq, log_images);
            for (std::size_t n = 0; n < 4; ++n) acc[n] += cider_sim(hyp, ref, n);
        }
        double mean = 0.0;
        for (double a : acc) mean += a;
        mean /= 4.0;
        out[i] = mean / static_cast<double>(refs[i].size()) * 10.0;
    }
    return out;
}

double cider(const EvalCorpus& corpus) {
    const auto scores = cider_scores(corpus);
    double total = 0.0;
    for (double s : scores) total += s;
    return total / static_cast<double>(scores.size());
}

EvalCorpus load_eval_corpus(const std::filesystem::path& predictions, const std::filesystem::path& references) {
    auto read_lines = [](const std::filesystem::path& path, auto&& on_object) {
        std::ifstream in(path);
        require(in.good(), ErrorKind::Io, fmt::format("cannot open '{}'", path.string()));
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            try {
                on_object(nlohmann::json::parse(line));
            } catch (const nlohmann::json::exception& e) {
                fail(ErrorKind::Decode, fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
            }
        }
    };

    std::vector<std::string> order;
    std::map<std::string, std::string> preds;
    read_lines(predictions, [&](const nlohmann::json& j) {
        const auto id = j.at("id").get<std::string>();
        require(!preds.contains(id), ErrorKind::Input, fmt::format("eval: duplicate prediction for '{}'", id));
        preds[id] = j.at("caption").get<std::string>();
        order.push_back(id);
    });

    std::map<std::string, std::vector<std::string>> refs;
    read_lines(references, [&](const nlohmann::json& j) {
        auto& list = refs[j.at("id").get<std::string>()];
        if (j.contains("captions")) {
            for (const auto& c : j.at("captions")) list.push_back(c.get<std::string>());
        } else {
            list.push_back(j.at("caption").get<std::string>());
        }
    });

    EvalCorpus corpus;
    for (const auto& id : order) {
        auto it = refs.find(id);
        require(it != refs.end(), ErrorKind::Input, fmt::format("eval: no references for '{}'", id));
        corpus.ids.push_back(id);
        corpus.candidates.push_back(preds[id]);
        corpus.references.push_back(it->second);
    }
    corpus.validate();
    return corpus;
}

}  // namespace vipcap
