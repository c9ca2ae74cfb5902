#pragma once

// Layer building blocks addressed by parameter-name prefix. Weights use the
// row-vector convention y = x W + b with W stored as (in x out).

#include <string>

#include "vipcap/autograd.hpp"
#include "vipcap/params.hpp"

namespace vipcap::nn {

struct AttentionShape {
    Eigen::Index query_dim = 0;
    Eigen::Index kv_dim = 0;
    Eigen::Index out_dim = 0;
    int num_heads = 1;
    int head_dim = 1;

    Eigen::Index inner() const { return static_cast<Eigen::Index>(num_heads) * head_dim; }
};

void append_linear(ParameterLayout& layout, const std::string& prefix, Eigen::Index in, Eigen::Index out,
                   bool trainable, Init weight_init = Init::Normal);
void append_layer_norm(ParameterLayout& layout, const std::string& prefix, Eigen::Index dim, bool trainable);
/// q/k/v/o projections under `prefix`.{q,k,v,o}. `zero_output` zero-initialises o.
void append_attention(ParameterLayout& layout, const std::string& prefix, const AttentionShape& shape,
                      bool trainable, bool zero_output = false);
/// Two-layer GELU MLP under `prefix`.fc1 / `prefix`.fc2.
void append_mlp(ParameterLayout& layout, const std::string& prefix, Eigen::Index in, Eigen::Index hidden,
                Eigen::Index out, bool trainable);

ag::Var linear(const ParameterStore& store, const std::string& prefix, const ag::Var& x);
ag::Var layer_norm(const ParameterStore& store, const std::string& prefix, const ag::Var& x);
ag::Var mlp(const ParameterStore& store, const std::string& prefix, const ag::Var& x);

/// Multi-head scaled dot-product attention. Queries come from `query_in`,
/// keys and values from `kv_in`; no positional information is added.
ag::Var attention(const ParameterStore& store, const std::string& prefix, const ag::Var& query_in,
                  const ag::Var& kv_in, int num_heads, int head_dim, bool causal = false);

}  // namespace vipcap::nn
