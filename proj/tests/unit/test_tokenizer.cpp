#include <gtest/gtest.h>

#include "vipcap/tokenizer.hpp"

namespace vipcap {
namespace {

TEST(Tokenizer, WordsAndPunctuation) {
    const auto toks = tokenize("Similar images show a Dog, don't they.");
    std::vector<std::string> text;
    for (const auto& t : toks) text.push_back(t.text);
    EXPECT_EQ(text, (std::vector<std::string>{"similar", "images", "show", "a", "dog", ",", "don't", "they", "."}));
    EXPECT_EQ(count_tokens("  "), 0u);
}

TEST(Tokenizer, TruncationIsAPrefix) {
    const std::string s = "one two, three four";
    EXPECT_EQ(truncate_tokens(s, 3), "one two,");
    EXPECT_EQ(truncate_tokens(s, 10), s);
    EXPECT_EQ(truncate_tokens(s, 0), "");
    EXPECT_EQ(count_tokens(truncate_tokens(s, 2)), 2u);
}

TEST(Vocabulary, SpecialsAndFrequencyOrder) {
    const Vocabulary v = Vocabulary::build({"b a a", "c b a"}, 100);
    EXPECT_EQ(v.token(Vocabulary::kPad), "<pad>");
    EXPECT_EQ(v.token(Vocabulary::kBos), "<bos>");
    EXPECT_EQ(v.token(Vocabulary::kEos), "<eos>");
    EXPECT_EQ(v.token(Vocabulary::kUnk), "<unk>");
    EXPECT_EQ(v.token(4), "a");
    EXPECT_EQ(v.token(5), "b");
    EXPECT_EQ(v.token(6), "c");
    EXPECT_EQ(v.id("zebra"), Vocabulary::kUnk);
}

TEST(Vocabulary, CapAndRoundTrip) {
    const Vocabulary v = Vocabulary::build({"x y z x y x"}, 6);
    EXPECT_EQ(v.size(), 6u);
    EXPECT_EQ(v.id("z"), Vocabulary::kUnk);

    const Vocabulary w = Vocabulary::build({"a dog runs, a cat sits."}, 64);
    EXPECT_EQ(w.decode(w.encode("a dog runs, a cat sits.")), "a dog runs, a cat sits.");
    std::vector<int> ids = w.encode("a dog");
    ids.insert(ids.begin(), Vocabulary::kBos);
    ids.push_back(Vocabulary::kEos);
    EXPECT_EQ(w.decode(ids), "a dog");
}

}  // namespace
}  // namespace vipcap
