#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major double
// matrices. A Var is a shared handle to a graph node; graphs are built
// eagerly by the free functions below and released when the last handle to
// the output goes out of scope.

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "vipcap/matrix.hpp"

namespace vipcap::ag {

struct Node {
    Matrix value;
    Matrix grad;  // empty until first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    void accumulate(const Matrix& g);
};

class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    bool defined() const noexcept { return node_ != nullptr; }
    const Matrix& value() const { return node_->value; }
    Matrix& mutable_value() { return node_->value; }
    /// Zero matrix of the right shape when no gradient has reached this node.
    Matrix grad() const;
    bool requires_grad() const { return node_->requires_grad; }
    void zero_grad() { node_->grad.resize(0, 0); }

    Eigen::Index rows() const { return node_->value.rows(); }
    Eigen::Index cols() const { return node_->value.cols(); }

    Node* node() const noexcept { return node_.get(); }
    const std::shared_ptr<Node>& shared() const noexcept { return node_; }

private:
    std::shared_ptr<Node> node_;
};

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled() noexcept;

Var constant(Matrix value);
Var leaf(Matrix value, bool requires_grad = true);

/// Runs backpropagation from a 1x1 output, seeding it with `seed`.
void backward(const Var& output, double seed = 1.0);

Var matmul(const Var& a, const Var& b);
/// a * b^T
Var matmul_bt(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
/// Adds a 1xC row to every row of a.
Var add_row(const Var& a, const Var& row);
/// Stacks `rows` copies of a 1xC row.
Var broadcast_rows(const Var& row, Eigen::Index rows);
/// row + scale_row ⊙ noise, row-wise over noise's rows; 1xC inputs.
Var affine_rows(const Var& row, const Var& scale_row, const Matrix& noise);

Var gelu(const Var& a);
Var softplus(const Var& a);
Var add_scalar(const Var& a, double s);

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
/// Row-wise softmax. With `causal`, entry (i, j) for j > i is masked out.
Var softmax_rows(const Var& a, bool causal = false);

Var gather_rows(const Var& a, std::span<const int> indices);
Var slice_cols(const Var& a, Eigen::Index first, Eigen::Index count);
Var concat_cols(std::span<const Var> parts);
Var slice_rows(const Var& a, Eigen::Index first, Eigen::Index count);

Var sum(const Var& a);
/// sum(a ⊙ weights) as a 1x1 value.
Var weighted_sum(const Var& a, const Matrix& weights);

/// Mean negative log-likelihood of `targets` under row-wise softmax(logits),
/// over rows where `mask` is true. Returns 1x1.
Var cross_entropy(const Var& logits, std::span<const int> targets, const std::vector<bool>& mask);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }

}  // namespace vipcap::ag
