#include "vipcap/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include "vipcap/error.hpp"

namespace vipcap {
namespace {

bool is_word_char(unsigned char c) { return std::isalnum(c) != 0 || c == '\'' || c >= 0x80; }

bool is_punct_token(const std::string& t) {
    return t.size() == 1 && !is_word_char(static_cast<unsigned char>(t[0]));
}

}  // namespace

std::vector<Token> tokenize(std::string_view text) {
    std::vector<Token> out;
    std::size_t i = 0;
    while (i < text.size()) {
        const auto c = static_cast<unsigned char>(text[i]);
        if (std::isspace(c) != 0) {
            ++i;
            continue;
        }
        Token tok;
        tok.begin = i;
        if (is_word_char(c)) {
            while (i < text.size() && is_word_char(static_cast<unsigned char>(text[i]))) {
                tok.text.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(text[i]))));
                ++i;
            }
        } else {
            tok.text.push_back(static_cast<char>(c));
            ++i;
        }
        tok.end = i;
        out.push_back(std::move(tok));
    }
    return out;
}

std::size_t count_tokens(std::string_view text) { return tokenize(text).size(); }

std::string_view truncate_tokens(std::string_view text, std::size_t max_tokens) {
    const auto tokens = tokenize(text);
    if (tokens.size() <= max_tokens) return text;
    if (max_tokens == 0) return text.substr(0, 0);
    return text.substr(0, tokens[max_tokens - 1].end);
}

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) {
    const std::vector<std::string> specials{"<pad>", "<bos>", "<eos>", "<unk>"};
    if (tokens.size() < specials.size() || !std::equal(specials.begin(), specials.end(), tokens.begin())) {
        tokens.insert(tokens.begin(), specials.begin(), specials.end());
    }
    tokens_ = std::move(tokens);
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        const bool inserted = index_.emplace(tokens_[i], static_cast<int>(i)).second;
        require(inserted, ErrorKind::Build, "vocabulary: duplicate token '" + tokens_[i] + "'");
    }
}

Vocabulary Vocabulary::build(const std::vector<std::string>& corpus, std::size_t max_size) {
    std::map<std::string, std::size_t> freq;
    for (const auto& text : corpus) {
        for (const auto& tok : tokenize(text)) ++freq[tok.text];
    }
    std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> tokens;
    const std::size_t room = max_size > 4 ? max_size - 4 : 0;
    for (std::size_t i = 0; i < ranked.size() && i < room; ++i) tokens.push_back(ranked[i].first);
    return Vocabulary(std::move(tokens));
}

int Vocabulary::id(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
    require(id >= 0 && static_cast<std::size_t>(id) < tokens_.size(), ErrorKind::Input, "vocabulary: id out of range");
    return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(std::string_view text) const {
    std::vector<int> ids;
    for (const auto& tok : tokenize(text)) ids.push_back(id(tok.text));
    return ids;
}

std::string Vocabulary::decode(const std::vector<int>& ids) const {
    std::string out;
    for (int id : ids) {
        if (id == kPad || id == kBos || id == kEos) continue;
        const std::string& t = token(id);
        if (!out.empty() && !is_punct_token(t)) out.push_back(' ');
        out += t;
    }
    return out;
}

}  // namespace vipcap
