#include <functional>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "vipcap/autograd.hpp"
#include "vipcap/error.hpp"
#include "vipcap/rng.hpp"

namespace vipcap {
namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
    Rng rng(seed);
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    return m;
}

using Op = std::function<ag::Var(const ag::Var&)>;

// Checks d/dX sum(W ⊙ op(X)) against central differences.
void expect_gradient(const Op& op, const Matrix& x0, double tol = 1e-6) {
    const ag::Var probe_out = op(ag::constant(x0));
    const Matrix w = random_matrix(probe_out.rows(), probe_out.cols(), 99);

    ag::Var x = ag::leaf(x0);
    ag::backward(ag::weighted_sum(op(x), w));
    const Matrix analytic = x.grad();

    auto f = [&](const oracle::Vec& p) {
        Matrix xm = x0;
        for (Eigen::Index i = 0; i < xm.size(); ++i) xm.data()[i] = p(i);
        ag::NoGradGuard guard;
        return ag::weighted_sum(op(ag::constant(xm)), w).value()(0, 0);
    };
    const oracle::Vec flat = Eigen::Map<const oracle::Vec>(x0.data(), x0.size());
    const oracle::Vec numeric = oracle::finite_diff_grad(f, flat);
    for (Eigen::Index i = 0; i < x0.size(); ++i) {
        EXPECT_NEAR(analytic.data()[i], numeric(i), tol * std::max(1.0, std::abs(numeric(i)))) << "coordinate " << i;
    }
}

TEST(Autograd, MatmulBothSides) {
    const Matrix b = random_matrix(4, 2, 2);
    expect_gradient([&](const ag::Var& x) { return ag::matmul(x, ag::constant(b)); }, random_matrix(3, 4, 1));
    const Matrix a = random_matrix(2, 3, 3);
    expect_gradient([&](const ag::Var& x) { return ag::matmul(ag::constant(a), x); }, random_matrix(3, 4, 4));
    expect_gradient([&](const ag::Var& x) { return ag::matmul_bt(x, x); }, random_matrix(3, 4, 5));
}

TEST(Autograd, ElementwiseOps) {
    const Matrix x0 = random_matrix(3, 5, 6);
    expect_gradient([](const ag::Var& x) { return ag::gelu(x); }, x0);
    expect_gradient([](const ag::Var& x) { return ag::softplus(x); }, x0);
    expect_gradient([](const ag::Var& x) { return ag::mul(x, x); }, x0);
    expect_gradient([](const ag::Var& x) { return ag::scale(ag::add_scalar(x, 2.0), -0.5); }, x0);
    expect_gradient([](const ag::Var& x) { return x - ag::scale(x, 3.0); }, x0);
}

TEST(Autograd, RowBroadcasts) {
    const Matrix noise = random_matrix(6, 4, 7);
    const Matrix other = random_matrix(1, 4, 8);
    expect_gradient([&](const ag::Var& r) { return ag::affine_rows(r, ag::constant(other), noise); },
                    random_matrix(1, 4, 9));
    expect_gradient([&](const ag::Var& s) { return ag::affine_rows(ag::constant(other), s, noise); },
                    random_matrix(1, 4, 10));
    const Matrix base = random_matrix(3, 4, 11);
    expect_gradient([&](const ag::Var& r) { return ag::add_row(ag::constant(base), r); }, random_matrix(1, 4, 12));
    expect_gradient([](const ag::Var& r) { return ag::broadcast_rows(r, 5); }, random_matrix(1, 4, 13));
}

TEST(Autograd, NormalisationAndSoftmax) {
    const Matrix gamma = random_matrix(1, 6, 14);
    const Matrix beta = random_matrix(1, 6, 15);
    expect_gradient(
        [&](const ag::Var& x) { return ag::layer_norm(x, ag::constant(gamma), ag::constant(beta)); },
        random_matrix(4, 6, 16));
    const Matrix x0 = random_matrix(4, 6, 17);
    expect_gradient([&](const ag::Var& g) { return ag::layer_norm(ag::constant(x0), g, ag::constant(beta)); },
                    gamma);
    expect_gradient([](const ag::Var& x) { return ag::softmax_rows(x); }, random_matrix(3, 5, 18));
    expect_gradient([](const ag::Var& x) { return ag::softmax_rows(x, true); }, random_matrix(5, 5, 19));
}

TEST(Autograd, ShapeOps) {
    const std::vector<int> idx{2, 0, 2, 1};
    expect_gradient([&](const ag::Var& x) { return ag::gather_rows(x, idx); }, random_matrix(3, 4, 20));
    expect_gradient([](const ag::Var& x) { return ag::slice_cols(x, 1, 2); }, random_matrix(3, 4, 21));
    expect_gradient([](const ag::Var& x) { return ag::slice_rows(x, 1, 2); }, random_matrix(3, 4, 22));
    expect_gradient(
        [](const ag::Var& x) {
            const std::vector<ag::Var> parts{ag::slice_cols(x, 2, 2), x, ag::slice_cols(x, 0, 1)};
            return ag::concat_cols(parts);
        },
        random_matrix(3, 4, 23));
}

TEST(Autograd, CrossEntropyGradientAndValue) {
    const std::vector<int> targets{1, 0, 3};
    const std::vector<bool> mask{true, false, true};
    expect_gradient([&](const ag::Var& x) { return ag::cross_entropy(x, targets, mask); }, random_matrix(3, 4, 24));

    // Uniform logits over 10 classes give ln 10 per token.
    const std::vector<int> t{3, 7};
    const std::vector<bool> m{true, true};
    const ag::Var loss = ag::cross_entropy(ag::constant(Matrix::Zero(2, 10)), t, m);
    EXPECT_NEAR(loss.value()(0, 0), std::log(10.0), 1e-12);
}

TEST(Autograd, CrossEntropyRejectsEmptySpan) {
    const std::vector<int> targets{1};
    const std::vector<bool> mask{false};
    EXPECT_THROW(ag::cross_entropy(ag::constant(Matrix::Zero(1, 3)), targets, mask), Error);
}

TEST(Autograd, SharedSubgraphAccumulates) {
    ag::Var x = ag::leaf(Matrix::Constant(1, 1, 3.0));
    const ag::Var y = ag::mul(x, x) + x;
    ag::backward(ag::sum(y));
    EXPECT_DOUBLE_EQ(x.grad()(0, 0), 7.0);
}

TEST(Autograd, NoGradGuardSkipsRecording) {
    ag::Var x = ag::leaf(Matrix::Ones(2, 2));
    ag::Var y;
    {
        ag::NoGradGuard guard;
        y = ag::scale(x, 2.0);
    }
    EXPECT_FALSE(y.requires_grad());
    EXPECT_TRUE(ag::grad_enabled());
}

}  // namespace
}  // namespace vipcap
