#include <cmath>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "vipcap/decoder.hpp"
#include "vipcap/error.hpp"

namespace vipcap {
namespace {

DecoderConfig toy_decoder() {
    DecoderConfig d;
    d.vocab_size = 24;
    d.d_model = 16;
    d.num_layers = 2;
    d.num_heads = 2;
    d.max_context = 16;
    return d;
}

const AdapterConfig kAdapter{2, 4};
constexpr int kImageDim = 8;

ParameterStore make_store(std::uint64_t seed, bool perturb_adapter) {
    ParameterLayout layout = decoder_layout(toy_decoder());
    for (auto& s : adapter_layout(toy_decoder(), kAdapter, kImageDim)) layout.push_back(s);
    ParameterStore store = ParameterStore::materialize(layout, Rng(seed));
    if (perturb_adapter) {
        Rng rng(seed + 1);
        for (const auto& name : store.names()) {
            if (name.rfind("xattn.", 0) != 0) continue;
            Matrix& v = store.get(name).mutable_value();
            for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] += 0.2 * rng.normal();
        }
    }
    return store;
}

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
    Rng rng(seed);
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    return m;
}

const std::vector<int> kTokens{1, 5, 9, 4, 7, 2};

CaptionSequence toy_sequence() {
    CaptionSequence seq;
    seq.tokens = kTokens;
    seq.prefix_len = 3;
    return seq;
}

TEST(Decoder, LayoutNamesAndFreezing) {
    for (const auto& s : decoder_layout(toy_decoder())) {
        EXPECT_EQ(s.name.rfind("decoder.", 0), 0u);
        EXPECT_FALSE(s.trainable);
    }
    for (const auto& s : adapter_layout(toy_decoder(), kAdapter, kImageDim)) {
        EXPECT_EQ(s.name.rfind("xattn.layer", 0), 0u);
        EXPECT_TRUE(s.trainable);
    }
    const ParameterStore store = make_store(1, false);
    EXPECT_TRUE(store.contains("xattn.layer1.o.weight"));
    EXPECT_TRUE(store.get("xattn.layer0.o.weight").value().isZero());
}

TEST(Decoder, ShapeDeterminismAndZeroInitAdapter) {
    const ParameterStore store = make_store(2, false);
    const ag::Var visual = ag::constant(random_matrix(4, kImageDim, 3));
    const ag::Var logits = forward_with_prompt(store, toy_decoder(), kAdapter, kTokens, visual);
    EXPECT_EQ(logits.rows(), 6);
    EXPECT_EQ(logits.cols(), 24);
    EXPECT_EQ(logits.value(), forward_with_prompt(store, toy_decoder(), kAdapter, kTokens, visual).value());
    EXPECT_EQ(logits.value(), forward_with_prompt(store, toy_decoder(), kAdapter, kTokens, ag::Var{}).value());

    const ParameterStore trained = make_store(2, true);
    EXPECT_FALSE(forward_with_prompt(trained, toy_decoder(), kAdapter, kTokens, visual)
                     .value()
                     .isApprox(logits.value()));
}

TEST(Decoder, ContextOverflowIsInputError) {
    const ParameterStore store = make_store(4, false);
    std::vector<int> too_long(17, 5);
    try {
        forward_with_prompt(store, toy_decoder(), kAdapter, too_long, ag::Var{});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Input);
    }
}

TEST(CaptionLoss, ClosedForms) {
    CaptionSequence seq = toy_sequence();
    Matrix perfect = Matrix::Constant(5, 24, -1000.0);
    const auto targets = seq.targets();
    for (int t = 0; t < 5; ++t) perfect(t, targets[static_cast<std::size_t>(t)]) = 1000.0;
    EXPECT_EQ(caption_loss(ag::constant(perfect), seq).value()(0, 0), 0.0);

    CaptionSequence ten{{1, 3, 7, 2}, 2};
    EXPECT_NEAR(caption_loss(ag::constant(Matrix::Zero(3, 10)), ten).value()(0, 0), 2.302585092994046, 1e-12);

    CaptionSequence empty{{1, 4, 5}, 3};
    EXPECT_THROW(caption_loss(ag::constant(Matrix::Zero(2, 10)), empty), Error);
}

TEST(CaptionLoss, MasksPromptAndMatchesPerStepSum) {
    const ParameterStore store = make_store(5, true);
    const ag::Var visual = ag::constant(random_matrix(4, kImageDim, 6));
    const CaptionSequence seq = toy_sequence();
    const auto inputs = seq.inputs();
    const double mean = caption_loss(forward_with_prompt(store, toy_decoder(), kAdapter, inputs, visual), seq)
                            .value()(0, 0);
    EXPECT_GE(mean, 0.0);

    // Recompute each step from its own prefix.
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t t = seq.prefix_len; t < seq.tokens.size(); ++t) {
        std::vector<int> prefix(seq.tokens.begin(), seq.tokens.begin() + static_cast<std::ptrdiff_t>(t));
        const Matrix p = token_distributions(forward_with_prompt(store, toy_decoder(), kAdapter, prefix, visual));
        total += -std::log(p(p.rows() - 1, seq.tokens[t]));
        ++count;
    }
    EXPECT_EQ(count, seq.reference_length());
    EXPECT_NEAR(mean * static_cast<double>(count), total, 1e-10);
}

TEST(CaptionLoss, AdapterGradientMatchesFiniteDifferences) {
    const ParameterStore base = make_store(7, true);
    const Matrix visual = random_matrix(4, kImageDim, 8);
    const CaptionSequence seq = toy_sequence();
    const auto inputs = seq.inputs();
    const std::string name = "xattn.layer1.v.weight";

    ParameterStore store = base;
    ag::backward(caption_loss(forward_with_prompt(store, toy_decoder(), kAdapter, inputs, ag::constant(visual)), seq));
    const Matrix analytic = store.get(name).grad();
    EXPECT_EQ(store.grad_norm_sq([](const std::string& n) { return n.rfind("decoder.", 0) == 0; }), 0.0);

    auto f = [&](const oracle::Vec& p) {
        ParameterStore s = base;
        Matrix& w = s.get(name).mutable_value();
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = p(i);
        ag::NoGradGuard guard;
        return caption_loss(forward_with_prompt(s, toy_decoder(), kAdapter, inputs, ag::constant(visual)), seq)
            .value()(0, 0);
    };
    const Matrix& w0 = base.get(name).value();
    const oracle::Vec numeric = oracle::finite_diff_grad(f, Eigen::Map<const oracle::Vec>(w0.data(), w0.size()));
    double worst = 0.0;
    for (Eigen::Index i = 0; i < numeric.size(); ++i) {
        const double denom = std::max(std::abs(numeric(i)), 1e-6);
        worst = std::max(worst, std::abs(analytic.data()[i] - numeric(i)) / denom);
    }
    EXPECT_LE(worst, 1e-4);
}

TEST(Search, ForcedTokenThenEos) {
    const NextTokenScorer scorer = [](const std::vector<int>& history) {
        RowVector logp = RowVector::Constant(8, -50.0);
        logp(history.size() == 1 ? 6 : Vocabulary::kEos) = 0.0;
        return logp;
    };
    EXPECT_EQ(greedy_search(scorer, {1}, Vocabulary::kEos, 10), std::vector<int>{6});
    EXPECT_EQ(beam_search(scorer, {1}, Vocabulary::kEos, 10, 3), std::vector<int>{6});
    EXPECT_EQ(greedy_search([](const std::vector<int>&) { return RowVector::Zero(8).eval(); }, {1},
                            Vocabulary::kEos, 4),
              std::vector<int>(4, 0));
}

TEST(Search, BeamOneEqualsGreedy) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const NextTokenScorer scorer = [seed](const std::vector<int>& history) {
            std::uint64_t h = seed;
            for (int t : history) h = mix_seed(h, static_cast<std::uint64_t>(t));
            Rng rng(h);
            RowVector logits(12);
            for (Eigen::Index i = 0; i < 12; ++i) logits(i) = rng.normal();
            const double lse = std::log(logits.array().exp().sum());
            return RowVector(logits.array() - lse);
        };
        EXPECT_EQ(beam_search(scorer, {1}, Vocabulary::kEos, 8, 1), greedy_search(scorer, {1}, Vocabulary::kEos, 8));
    }
    const ParameterStore store = make_store(9, true);
    const ag::Var visual = ag::constant(random_matrix(4, kImageDim, 10));
    EXPECT_EQ(generate_tokens(store, toy_decoder(), kAdapter, {1, 5}, visual, DecodeStrategy::beam(1), 6),
              generate_tokens(store, toy_decoder(), kAdapter, {1, 5}, visual, DecodeStrategy::greedy(), 6));
}

TEST(Search, BeamWidensOverGreedy) {
    // Greedy takes token 4 first (p=0.6) but the best full sequence goes through 5.
    const NextTokenScorer scorer = [](const std::vector<int>& h) {
        RowVector p = RowVector::Constant(7, 1e-9);
        if (h.size() == 1) {
            p(4) = 0.6;
            p(5) = 0.4;
        } else if (h.back() == 4) {
            p(6) = 0.5;
            p(Vocabulary::kEos) = 0.5;
        } else if (h.back() == 5) {
            p(Vocabulary::kEos) = 1.0;
        } else {
            p(Vocabulary::kEos) = 1.0;
        }
        return RowVector(p.array().log());
    };
    EXPECT_EQ(greedy_search(scorer, {1}, Vocabulary::kEos, 5).front(), 4);
    EXPECT_EQ(beam_search(scorer, {1}, Vocabulary::kEos, 5, 2), std::vector<int>{5});
}

}  // namespace
}  // namespace vipcap
