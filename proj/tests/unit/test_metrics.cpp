#include <algorithm>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "vipcap/error.hpp"
#include "vipcap/metrics.hpp"

namespace vipcap {
namespace {

// Frozen from two independent routes (nltk corpus_bleu / pycocoevalcap CIDEr-D
// and a direct evaluation of the formulas); see tests/oracles/metric_values.py.
constexpr double kToyBleu = 0.35840868595663966;
constexpr double kToyCider = 1.5701905295309904;

EvalCorpus bleu_corpus() {
    return {{"0", "1", "2"},
            {"the cat sat on the mat", "a dog runs in the park", "two birds fly over the blue lake today"},
            {{"the cat is on the mat", "there is a cat on the mat"},
             {"a dog is running in the park", "the dog runs through a park"},
             {"two birds are flying over a blue lake", "birds fly over the lake"}}};
}

EvalCorpus cider_corpus() {
    return {{"0", "1", "2", "3", "4"},
            {"a man riding a horse on a beach", "a plate of food with broccoli", "two dogs playing in the snow",
             "a red bus on the street", "a cat sleeping on a couch"},
            {{"a man rides a horse along the beach", "a person on horseback at the shore",
              "man riding horse near ocean"},
             {"a plate with broccoli and rice", "food on a white plate", "a dish of vegetables and meat"},
             {"two dogs play in snow", "dogs running through the snow", "a pair of dogs in a snowy field"},
             {"a red double decker bus", "a bus driving down a city street", "red bus parked on the road"},
             {"a cat asleep on the sofa", "a kitten lying on a couch", "cat resting on furniture"}}};
}

TEST(MetricTokens, LowercaseStripPunctuation) {
    EXPECT_EQ(metric_tokens("A Dog, running!  fast."), (std::vector<std::string>{"a", "dog", "running", "fast"}));
}

TEST(Bleu, IdenticalCorpusIsOne) {
    EvalCorpus c = bleu_corpus();
    for (std::size_t i = 0; i < c.size(); ++i) c.references[i] = {c.candidates[i]};
    EXPECT_EQ(bleu4(c), 1.0);
}

TEST(Bleu, NoSharedFourGramIsZero) {
    const EvalCorpus c{{"0"}, {"alpha beta gamma delta epsilon"}, {{"alpha beta gamma zeta delta epsilon"}}};
    EXPECT_EQ(bleu4(c), 0.0);
}

TEST(Bleu, ToyCorpusMatchesOracle) {
    const BleuStats s = bleu4_stats(bleu_corpus());
    EXPECT_NEAR(s.precisions[0], 9.0 / 10.0, 1e-12);
    EXPECT_NEAR(s.precisions[1], 12.0 / 17.0, 1e-12);
    EXPECT_NEAR(s.precisions[2], 4.0 / 14.0, 1e-12);
    EXPECT_NEAR(s.precisions[3], 1.0 / 11.0, 1e-12);
    EXPECT_EQ(s.brevity_penalty, 1.0);
    EXPECT_NEAR(s.score, kToyBleu, 1e-9);
}

TEST(Bleu, BrevityPenaltyOnTruncation) {
    EvalCorpus full{{"0"}, {"a small brown dog runs across the green park"},
                    {{"a small brown dog runs across the green park"}}};
    double previous = bleu4(full);
    for (std::size_t keep : {8u, 7u, 6u, 5u}) {
        EvalCorpus cut = full;
        const auto toks = metric_tokens(full.candidates[0]);
        std::string s;
        for (std::size_t i = 0; i < keep; ++i) s += (i ? " " : "") + toks[i];
        cut.candidates[0] = s;
        const BleuStats st = bleu4_stats(cut);
        EXPECT_LT(st.brevity_penalty, 1.0);
        EXPECT_LT(st.score, previous);
        previous = st.score;
    }
}

TEST(Bleu, EmptyCandidateCountsAsNoMatch) {
    EvalCorpus c = bleu_corpus();
    c.candidates[0] = "";
    EXPECT_NO_THROW(bleu4(c));
    EXPECT_LT(bleu4(c), kToyBleu);
}

TEST(Cider, DisjointVocabulariesScoreZero) {
    const EvalCorpus c{{"0", "1"}, {"red apple", "blue sky"}, {{"green tree"}, {"yellow sun"}}};
    EXPECT_EQ(cider(c), 0.0);
}

TEST(Cider, IdenticalPairMatchesStepwiseOracle) {
    const EvalCorpus c{{"0", "1"},
                       {"a dog runs on the grass", "a red car parked outside"},
                       {{"a dog runs on the grass"}, {"a blue boat on the water"}}};
    const auto per = cider_scores(c);
    EXPECT_NEAR(per[0], 10.0, 1e-12);
    EXPECT_NEAR(per[1], 0.0, 1e-12);
    EXPECT_NEAR(cider(c), 5.0, 1e-12);
}

TEST(Cider, ToyCorpusMatchesOracle) { EXPECT_NEAR(cider(cider_corpus()), kToyCider, 1e-6); }

TEST(Cider, SingleImageIsInputError) {
    try {
        cider(EvalCorpus{{"0"}, {"a dog"}, {{"a dog"}}});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Input);
    }
}

TEST(Metrics, PermutationInvariance) {
    const EvalCorpus c = cider_corpus();
    EvalCorpus p = c;
    const std::vector<std::size_t> order{3, 0, 4, 1, 2};
    for (std::size_t i = 0; i < order.size(); ++i) {
        p.ids[i] = c.ids[order[i]];
        p.candidates[i] = c.candidates[order[i]];
        p.references[i] = c.references[order[i]];
    }
    EXPECT_NEAR(cider(p), cider(c), 1e-12);
    EXPECT_NEAR(bleu4(p), bleu4(c), 1e-12);
}

TEST(Metrics, LoadCorpusFromJsonl) {
    const auto dir = std::filesystem::temp_directory_path() / "vipcap_metrics_test";
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "pred.jsonl") << R"({"id": "b", "caption": "a cat"})" "\n" R"({"id": "a", "caption": "a dog"})" "\n";
    std::ofstream(dir / "refs.jsonl") << R"({"id": "a", "caption": "a dog"})" "\n"
                                      << R"({"id": "b", "captions": ["a cat", "the cat"]})" "\n"
                                      << R"({"id": "a", "caption": "one dog"})" "\n";
    const EvalCorpus c = load_eval_corpus(dir / "pred.jsonl", dir / "refs.jsonl");
    ASSERT_EQ(c.size(), 2u);
    for (std::size_t i = 0; i < c.size(); ++i) {
        if (c.ids[i] == "a") EXPECT_EQ(c.references[i], (std::vector<std::string>{"a dog", "one dog"}));
        if (c.ids[i] == "b") EXPECT_EQ(c.references[i], (std::vector<std::string>{"a cat", "the cat"}));
    }
    std::ofstream(dir / "refs2.jsonl") << R"({"id": "a", "caption": "a dog"})" "\n";
    EXPECT_THROW(load_eval_corpus(dir / "pred.jsonl", dir / "refs2.jsonl"), Error);
    std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace vipcap
