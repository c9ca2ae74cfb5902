#include "vipcap/nn.hpp"

#include <cmath>
#include <vector>

#include <fmt/format.h>

#include "vipcap/error.hpp"

namespace vipcap::nn {

void append_linear(ParameterLayout& layout, const std::string& prefix, Eigen::Index in, Eigen::Index out,
                   bool trainable, Init weight_init) {
    layout.push_back({prefix + ".weight", in, out, trainable, weight_init});
    layout.push_back({prefix + ".bias", 1, out, trainable, Init::Zeros});
}

void append_layer_norm(ParameterLayout& layout, const std::string& prefix, Eigen::Index dim, bool trainable) {
    layout.push_back({prefix + ".weight", 1, dim, trainable, Init::Ones});
    layout.push_back({prefix + ".bias", 1, dim, trainable, Init::Zeros});
}

void append_attention(ParameterLayout& layout, const std::string& prefix, const AttentionShape& shape,
                      bool trainable, bool zero_output) {
    require(shape.num_heads > 0 && shape.head_dim > 0, ErrorKind::Config,
            fmt::format("{}: heads and head_dim must be positive", prefix));
    append_linear(layout, prefix + ".q", shape.query_dim, shape.inner(), trainable);
    append_linear(layout, prefix + ".k", shape.kv_dim, shape.inner(), trainable);
    append_linear(layout, prefix + ".v", shape.kv_dim, shape.inner(), trainable);
    append_linear(layout, prefix + ".o", shape.inner(), shape.out_dim, trainable,
                  zero_output ? Init::Zeros : Init::Normal);
}

void append_mlp(ParameterLayout& layout, const std::string& prefix, Eigen::Index in, Eigen::Index hidden,
                Eigen::Index out, bool trainable) {
    append_linear(layout, prefix + ".fc1", in, hidden, trainable);
    append_linear(layout, prefix + ".fc2", hidden, out, trainable);
}

ag::Var linear(const ParameterStore& store, const std::string& prefix, const ag::Var& x) {
    return ag::add_row(ag::matmul(x, store.get(prefix + ".weight")), store.get(prefix + ".bias"));
}

ag::Var layer_norm(const ParameterStore& store, const std::string& prefix, const ag::Var& x) {
    return ag::layer_norm(x, store.get(prefix + ".weight"), store.get(prefix + ".bias"));
}

ag::Var mlp(const ParameterStore& store, const std::string& prefix, const ag::Var& x) {
    return linear(store, prefix + ".fc2", ag::gelu(linear(store, prefix + ".fc1", x)));
}

ag::Var attention(const ParameterStore& store, const std::string& prefix, const ag::Var& query_in,
                  const ag::Var& kv_in, int num_heads, int head_dim, bool causal) {
    const ag::Var q = linear(store, prefix + ".q", query_in);
    const ag::Var k = linear(store, prefix + ".k", kv_in);
    const ag::Var v = linear(store, prefix + ".v", kv_in);
    require(q.cols() == static_cast<Eigen::Index>(num_heads) * head_dim, ErrorKind::Config,
            fmt::format("{}: projection width {} != {} heads x {}", prefix, q.cols(), num_heads, head_dim));
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));

    std::vector<ag::Var> heads;
    heads.reserve(static_cast<std::size_t>(num_heads));
    for (int h = 0; h < num_heads; ++h) {
        const Eigen::Index at = static_cast<Eigen::Index>(h) * head_dim;
        ag::Var qh = num_heads == 1 ? q : ag::slice_cols(q, at, head_dim);
        ag::Var kh = num_heads == 1 ? k : ag::slice_cols(k, at, head_dim);
        ag::Var vh = num_heads == 1 ? v : ag::slice_cols(v, at, head_dim);
        ag::Var weights = ag::softmax_rows(ag::scale(ag::matmul_bt(qh, kh), inv_sqrt), causal);
        heads.push_back(ag::matmul(weights, vh));
    }
    ag::Var merged = num_heads == 1 ? heads.front() : ag::concat_cols(heads);
    return linear(store, prefix + ".o", merged);
}

}  // namespace vipcap::nn
