#include "vipcap/autograd.hpp"

#include <cmath>
#include <numbers>
#include <unordered_set>

#include <fmt/format.h>

#include "vipcap/error.hpp"

namespace vipcap::ag {
namespace {

thread_local bool g_grad_enabled = true;

using BackwardFn = std::function<void(Node&)>;

Var make(Matrix value, std::initializer_list<Var> inputs, BackwardFn fn) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    if (g_grad_enabled) {
        for (const Var& in : inputs) {
            if (in.requires_grad()) {
                node->requires_grad = true;
                break;
            }
        }
    }
    if (node->requires_grad) {
        for (const Var& in : inputs) node->parents.push_back(in.shared());
        node->backward_fn = std::move(fn);
    }
    return Var(std::move(node));
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        fail(ErrorKind::Config, fmt::format("{}: shape mismatch {}x{} vs {}x{}", op, a.rows(), a.cols(),
                                            b.rows(), b.cols()));
    }
}

void push(Node& self, std::size_t parent, const Matrix& g) {
    Node& p = *self.parents[parent];
    if (p.requires_grad) p.accumulate(g);
}

bool wants(const Node& self, std::size_t parent) { return self.parents[parent]->requires_grad; }

}  // namespace

void Node::accumulate(const Matrix& g) {
    if (grad.size() == 0) {
        grad = g;
    } else {
        grad += g;
    }
}

Matrix Var::grad() const {
    if (node_->grad.size() == 0) return Matrix::Zero(rows(), cols());
    return node_->grad;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() noexcept { return g_grad_enabled; }

Var constant(Matrix value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    return Var(std::move(node));
}

Var leaf(Matrix value, bool requires_grad) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->requires_grad = requires_grad;
    return Var(std::move(node));
}

void backward(const Var& output, double seed) {
    require(output.rows() == 1 && output.cols() == 1, ErrorKind::Config, "backward: output must be 1x1");
    if (!output.requires_grad()) return;

    // Iterative post-order DFS gives a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{output.node(), 0}};
    visited.insert(output.node());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* parent = node->parents[next++].get();
            if (parent->requires_grad && parent->backward_fn && !visited.contains(parent)) {
                visited.insert(parent);
                stack.emplace_back(parent, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    output.node()->accumulate(Matrix::Constant(1, 1, seed));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->grad.size() == 0 || !node->backward_fn) continue;
        node->backward_fn(*node);
        // Interior gradients are no longer needed once propagated.
        node->grad.resize(0, 0);
    }
}

Var matmul(const Var& a, const Var& b) {
    if (a.cols() != b.rows()) {
        fail(ErrorKind::Config,
             fmt::format("matmul: {}x{} * {}x{}", a.rows(), a.cols(), b.rows(), b.cols()));
    }
    return make(a.value() * b.value(), {a, b}, [](Node& self) {
        const Matrix& av = self.parents[0]->value;
        const Matrix& bv = self.parents[1]->value;
        if (wants(self, 0)) push(self, 0, self.grad * bv.transpose());
        if (wants(self, 1)) push(self, 1, av.transpose() * self.grad);
    });
}

Var matmul_bt(const Var& a, const Var& b) {
    if (a.cols() != b.cols()) {
        fail(ErrorKind::Config,
             fmt::format("matmul_bt: {}x{} * ({}x{})^T", a.rows(), a.cols(), b.rows(), b.cols()));
    }
    return make(a.value() * b.value().transpose(), {a, b}, [](Node& self) {
        const Matrix& av = self.parents[0]->value;
        const Matrix& bv = self.parents[1]->value;
        if (wants(self, 0)) push(self, 0, self.grad * bv);
        if (wants(self, 1)) push(self, 1, self.grad.transpose() * av);
    });
}

Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    return make(a.value() + b.value(), {a, b}, [](Node& self) {
        push(self, 0, self.grad);
        push(self, 1, self.grad);
    });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    return make(a.value() - b.value(), {a, b}, [](Node& self) {
        push(self, 0, self.grad);
        if (wants(self, 1)) push(self, 1, -self.grad);
    });
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    return make(a.value().cwiseProduct(b.value()), {a, b}, [](Node& self) {
        if (wants(self, 0)) push(self, 0, self.grad.cwiseProduct(self.parents[1]->value));
        if (wants(self, 1)) push(self, 1, self.grad.cwiseProduct(self.parents[0]->value));
    });
}

Var scale(const Var& a, double s) {
    return make(a.value() * s, {a}, [s](Node& self) { push(self, 0, self.grad * s); });
}

Var add_scalar(const Var& a, double s) {
    return make(a.value().array() + s, {a}, [](Node& self) { push(self, 0, self.grad); });
}

Var add_row(const Var& a, const Var& row) {
    if (row.rows() != 1 || row.cols() != a.cols()) {
        fail(ErrorKind::Config, fmt::format("add_row: {}x{} + row {}x{}", a.rows(), a.cols(), row.rows(),
                                            row.cols()));
    }
    Matrix out = a.value();
    out.rowwise() += row.value().row(0);
    return make(std::move(out), {a, row}, [](Node& self) {
        push(self, 0, self.grad);
        if (wants(self, 1)) push(self, 1, self.grad.colwise().sum());
    });
}

Var broadcast_rows(const Var& row, Eigen::Index rows) {
    require(row.rows() == 1, ErrorKind::Config, "broadcast_rows: input must be a single row");
    Matrix out = row.value().replicate(rows, 1);
    return make(std::move(out), {row}, [](Node& self) { push(self, 0, self.grad.colwise().sum()); });
}

Var affine_rows(const Var& row, const Var& scale_row, const Matrix& noise) {
    require(row.rows() == 1 && scale_row.rows() == 1 && row.cols() == scale_row.cols() &&
                noise.cols() == row.cols(),
            ErrorKind::Config, "affine_rows: shape mismatch");
    Matrix out(noise.rows(), noise.cols());
    for (Eigen::Index i = 0; i < noise.rows(); ++i) {
        for (Eigen::Index k = 0; k < noise.cols(); ++k) {
            out(i, k) = row.value()(0, k) + scale_row.value()(0, k) * noise(i, k);
        }
    }
    return make(std::move(out), {row, scale_row}, [noise](Node& self) {
        if (wants(self, 0)) push(self, 0, self.grad.colwise().sum());
        if (wants(self, 1)) push(self, 1, self.grad.cwiseProduct(noise).colwise().sum());
    });
}

Var gelu(const Var& a) {
    Matrix out = a.value().unaryExpr([](double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); });
    return make(std::move(out), {a}, [](Node& self) {
        const Matrix& x = self.parents[0]->value;
        Matrix d = x.unaryExpr([](double v) {
            const double cdf = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
            const double pdf = std::exp(-0.5 * v * v) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
            return cdf + v * pdf;
        });
        push(self, 0, self.grad.cwiseProduct(d));
    });
}

Var softplus(const Var& a) {
    Matrix out = a.value().unaryExpr([](double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); });
    return make(std::move(out), {a}, [](Node& self) {
        Matrix d = self.parents[0]->value.unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
        push(self, 0, self.grad.cwiseProduct(d));
    });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
    const Eigen::Index n = x.rows();
    const Eigen::Index c = x.cols();
    require(gamma.rows() == 1 && gamma.cols() == c && beta.rows() == 1 && beta.cols() == c, ErrorKind::Config,
            "layer_norm: affine parameters must be 1xC");
    Matrix xhat(n, c);
    Eigen::VectorXd inv_std(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double mean = x.value().row(i).mean();
        const double var = (x.value().row(i).array() - mean).square().mean();
        inv_std(i) = 1.0 / std::sqrt(var + eps);
        xhat.row(i) = (x.value().row(i).array() - mean) * inv_std(i);
    }
    Matrix out = xhat.array().rowwise() * gamma.value().row(0).array();
    out.rowwise() += beta.value().row(0);
    return make(std::move(out), {x, gamma, beta}, [xhat, inv_std](Node& self) {
        const Matrix& g = self.grad;
        const Matrix& gam = self.parents[1]->value;
        if (wants(self, 0)) {
            Matrix dxhat = g.array().rowwise() * gam.row(0).array();
            Matrix dx(g.rows(), g.cols());
            for (Eigen::Index i = 0; i < g.rows(); ++i) {
                const double m1 = dxhat.row(i).mean();
                const double m2 = dxhat.row(i).cwiseProduct(xhat.row(i)).mean();
                dx.row(i) = (dxhat.row(i).array() - m1 - xhat.row(i).array() * m2) * inv_std(i);
            }
            push(self, 0, dx);
        }
        if (wants(self, 1)) push(self, 1, g.cwiseProduct(xhat).colwise().sum());
        if (wants(self, 2)) push(self, 2, g.colwise().sum());
    });
}

Var softmax_rows(const Var& a, bool causal) {
    const Matrix& x = a.value();
    Matrix out = Matrix::Zero(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const Eigen::Index width = causal ? std::min<Eigen::Index>(i + 1, x.cols()) : x.cols();
        const double mx = x.row(i).head(width).maxCoeff();
        double total = 0.0;
        for (Eigen::Index j = 0; j < width; ++j) {
            out(i, j) = std::exp(x(i, j) - mx);
            total += out(i, j);
        }
        out.row(i).head(width) /= total;
    }
    return make(out, {a}, [out](Node& self) {
        Matrix dx(out.rows(), out.cols());
        for (Eigen::Index i = 0; i < out.rows(); ++i) {
            const double dot = self.grad.row(i).dot(out.row(i));
            dx.row(i) = out.row(i).array() * (self.grad.row(i).array() - dot);
        }
        push(self, 0, dx);
    });
}

Var gather_rows(const Var& a, std::span<const int> indices) {
    Matrix out(static_cast<Eigen::Index>(indices.size()), a.cols());
    for (std::size_t j = 0; j < indices.size(); ++j) {
        require(indices[j] >= 0 && indices[j] < a.rows(), ErrorKind::Input,
                fmt::format("gather_rows: index {} out of range [0, {})", indices[j], a.rows()));
        out.row(static_cast<Eigen::Index>(j)) = a.value().row(indices[j]);
    }
    std::vector<int> idx(indices.begin(), indices.end());
    return make(std::move(out), {a}, [idx = std::move(idx)](Node& self) {
        Matrix g = Matrix::Zero(self.parents[0]->value.rows(), self.parents[0]->value.cols());
        for (std::size_t j = 0; j < idx.size(); ++j) g.row(idx[j]) += self.grad.row(static_cast<Eigen::Index>(j));
        push(self, 0, g);
    });
}

Var slice_cols(const Var& a, Eigen::Index first, Eigen::Index count) {
    require(first >= 0 && count >= 0 && first + count <= a.cols(), ErrorKind::Config, "slice_cols: out of range");
    return make(a.value().middleCols(first, count), {a}, [first, count](Node& self) {
        Matrix g = Matrix::Zero(self.parents[0]->value.rows(), self.parents[0]->value.cols());
        g.middleCols(first, count) = self.grad;
        push(self, 0, g);
    });
}

Var slice_rows(const Var& a, Eigen::Index first, Eigen::Index count) {
    require(first >= 0 && count >= 0 && first + count <= a.rows(), ErrorKind::Config, "slice_rows: out of range");
    return make(a.value().middleRows(first, count), {a}, [first, count](Node& self) {
        Matrix g = Matrix::Zero(self.parents[0]->value.rows(), self.parents[0]->value.cols());
        g.middleRows(first, count) = self.grad;
        push(self, 0, g);
    });
}

Var concat_cols(std::span<const Var> parts) {
    require(!parts.empty(), ErrorKind::Config, "concat_cols: no inputs");
    const Eigen::Index rows = parts.front().rows();
    Eigen::Index cols = 0;
    for (const Var& p : parts) {
        require(p.rows() == rows, ErrorKind::Config, "concat_cols: row count mismatch");
        cols += p.cols();
    }
    Matrix out(rows, cols);
    Eigen::Index at = 0;
    for (const Var& p : parts) {
        out.middleCols(at, p.cols()) = p.value();
        at += p.cols();
    }

    auto node = std::make_shared<Node>();
    node->value = std::move(out);
    if (g_grad_enabled) {
        for (const Var& p : parts) node->requires_grad = node->requires_grad || p.requires_grad();
    }
    if (node->requires_grad) {
        for (const Var& p : parts) node->parents.push_back(p.shared());
        node->backward_fn = [](Node& self) {
            Eigen::Index offset = 0;
            for (std::size_t i = 0; i < self.parents.size(); ++i) {
                const Eigen::Index c = self.parents[i]->value.cols();
                if (wants(self, i)) push(self, i, self.grad.middleCols(offset, c));
                offset += c;
            }
        };
    }
    return Var(std::move(node));
}

Var sum(const Var& a) {
    return make(Matrix::Constant(1, 1, a.value().sum()), {a}, [](Node& self) {
        const Matrix& x = self.parents[0]->value;
        push(self, 0, Matrix::Constant(x.rows(), x.cols(), self.grad(0, 0)));
    });
}

Var weighted_sum(const Var& a, const Matrix& weights) {
    check_same_shape(a, constant(weights), "weighted_sum");
    return make(Matrix::Constant(1, 1, a.value().cwiseProduct(weights).sum()), {a},
                [weights](Node& self) { push(self, 0, weights * self.grad(0, 0)); });
}

Var cross_entropy(const Var& logits, std::span<const int> targets, const std::vector<bool>& mask) {
    const Matrix& x = logits.value();
    require(static_cast<Eigen::Index>(targets.size()) == x.rows() && targets.size() == mask.size(),
            ErrorKind::Config, "cross_entropy: targets/mask must match logits rows");
    Matrix probs(x.rows(), x.cols());
    double total = 0.0;
    int count = 0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double mx = x.row(i).maxCoeff();
        probs.row(i) = (x.row(i).array() - mx).exp();
        const double z = probs.row(i).sum();
        probs.row(i) /= z;
        if (!mask[static_cast<std::size_t>(i)]) continue;
        const int t = targets[static_cast<std::size_t>(i)];
        require(t >= 0 && t < x.cols(), ErrorKind::Input, fmt::format("cross_entropy: target {} out of range", t));
        total += -(x(i, t) - mx - std::log(z));
        ++count;
    }
    require(count > 0, ErrorKind::Input, "cross_entropy: empty reference span");
    std::vector<int> tgt(targets.begin(), targets.end());
    std::vector<bool> msk = mask;
    return make(Matrix::Constant(1, 1, total / count), {logits},
                [probs = std::move(probs), tgt = std::move(tgt), msk = std::move(msk), count](Node& self) {
                    Matrix g = Matrix::Zero(probs.rows(), probs.cols());
                    const double s = self.grad(0, 0) / count;
                    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
                        if (!msk[static_cast<std::size_t>(i)]) continue;
                        g.row(i) = probs.row(i) * s;
                        g(i, tgt[static_cast<std::size_t>(i)]) -= s;
                    }
                    push(self, 0, g);
                });
}

}  // namespace vipcap::ag
