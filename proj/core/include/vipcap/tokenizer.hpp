#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace vipcap {

struct Token {
    std::string text;  // lowercased
    std::size_t begin = 0;
    std::size_t end = 0;  // byte offsets into the source string
};

/// Word-level tokenizer used for prompt budgets and the decoder vocabulary:
/// runs of letters, digits, and apostrophes form words; every other
/// non-space character is its own token. Output is lowercased.
std::vector<Token> tokenize(std::string_view text);
std::size_t count_tokens(std::string_view text);
/// Prefix of `text` covering its first `max_tokens` tokens.
std::string_view truncate_tokens(std::string_view text, std::size_t max_tokens);

class Vocabulary {
public:
    static constexpr int kPad = 0;
    static constexpr int kBos = 1;
    static constexpr int kEos = 2;
    static constexpr int kUnk = 3;

    Vocabulary();
    explicit Vocabulary(std::vector<std::string> tokens);

    /// Most frequent tokens first (ties alphabetical), capped at `max_size`
    /// entries including the four specials.
    static Vocabulary build(const std::vector<std::string>& corpus, std::size_t max_size);

    int id(std::string_view token) const;
    const std::string& token(int id) const;
    std::size_t size() const noexcept { return tokens_.size(); }
    const std::vector<std::string>& tokens() const noexcept { return tokens_; }

    std::vector<int> encode(std::string_view text) const;
    /// Joins tokens with single spaces, omitting the space before punctuation.
    /// Special tokens are skipped.
    std::string decode(const std::vector<int>& ids) const;

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
};

}  // namespace vipcap
