#include "vipcap/params.hpp"

#include <cstring>

#include <fmt/format.h>

#include "vipcap/error.hpp"

namespace vipcap {

bool has_prefix(std::string_view name, std::string_view prefix) noexcept { return name.starts_with(prefix); }

std::size_t count_trainable(const ParameterLayout& layout) {
    std::size_t total = 0;
    for (const auto& spec : layout) {
        if (spec.trainable) total += spec.size();
    }
    return total;
}

std::size_t count_total(const ParameterLayout& layout) {
    std::size_t total = 0;
    for (const auto& spec : layout) total += spec.size();
    return total;
}

ParameterStore::ParameterStore(const ParameterStore& other) {
    for (const auto& [name, var] : other.params_) {
        params_.emplace(name, ag::leaf(var.value(), var.requires_grad()));
    }
}

ParameterStore& ParameterStore::operator=(const ParameterStore& other) {
    if (this != &other) {
        ParameterStore copy(other);
        params_ = std::move(copy.params_);
    }
    return *this;
}

ParameterStore ParameterStore::materialize(const ParameterLayout& layout, const Rng& rng) {
    ParameterStore store;
    for (const auto& spec : layout) {
        Matrix value;
        switch (spec.init) {
            case Init::Zeros: value = Matrix::Zero(spec.rows, spec.cols); break;
            case Init::Ones: value = Matrix::Ones(spec.rows, spec.cols); break;
            case Init::Normal: {
                Rng child = rng.split(spec.name);
                value.resize(spec.rows, spec.cols);
                for (Eigen::Index i = 0; i < value.size(); ++i) value.data()[i] = spec.init_std * child.normal();
                break;
            }
        }
        store.add(spec.name, std::move(value), spec.trainable);
    }
    return store;
}

void ParameterStore::add(const std::string& name, Matrix value, bool trainable) {
    require(!params_.contains(name), ErrorKind::Build, fmt::format("duplicate parameter '{}'", name));
    params_.emplace(name, ag::leaf(std::move(value), trainable));
}

bool ParameterStore::contains(std::string_view name) const { return params_.find(name) != params_.end(); }

const ag::Var& ParameterStore::get(std::string_view name) const {
    auto it = params_.find(name);
    if (it == params_.end()) fail(ErrorKind::Config, fmt::format("unknown parameter '{}'", name));
    return it->second;
}

ag::Var& ParameterStore::get(std::string_view name) {
    auto it = params_.find(name);
    if (it == params_.end()) fail(ErrorKind::Config, fmt::format("unknown parameter '{}'", name));
    return it->second;
}

void ParameterStore::set_trainable(std::string_view name, bool trainable) {
    ag::Var& v = get(name);
    v.node()->requires_grad = trainable;
    if (!trainable) v.zero_grad();
}

void ParameterStore::set_trainable_prefix(std::string_view prefix, bool trainable) {
    for (auto& [name, var] : params_) {
        if (has_prefix(name, prefix)) {
            var.node()->requires_grad = trainable;
            if (!trainable) var.zero_grad();
        }
    }
}

void ParameterStore::freeze_all() { set_trainable_prefix("", false); }

std::vector<std::string> ParameterStore::names() const {
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const auto& [name, _] : params_) out.push_back(name);
    return out;
}

std::size_t ParameterStore::count_trainable() const {
    std::size_t total = 0;
    for (const auto& [_, var] : params_) {
        if (var.requires_grad()) total += static_cast<std::size_t>(var.value().size());
    }
    return total;
}

void ParameterStore::zero_grad() {
    for (auto& [_, var] : params_) var.zero_grad();
}

double ParameterStore::grad_norm_sq(const std::function<bool(const std::string&)>& select) const {
    double total = 0.0;
    for (const auto& [name, var] : params_) {
        if (select(name)) total += var.grad().squaredNorm();
    }
    return total;
}

std::uint64_t ParameterStore::hash(const std::function<bool(const std::string&)>& select) const {
    std::uint64_t h = 0;
    for (const auto& [name, var] : params_) {
        if (!select(name)) continue;
        h = mix_seed(h, stable_hash(name));
        h = mix_seed(h, static_cast<std::uint64_t>(var.rows()) << 32 | static_cast<std::uint64_t>(var.cols()));
        const Matrix& m = var.value();
        h = mix_seed(h, stable_hash(std::as_bytes(std::span(m.data(), static_cast<std::size_t>(m.size())))));
    }
    return h;
}

}  // namespace vipcap
