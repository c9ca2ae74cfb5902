#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "vipcap/autograd.hpp"
#include "vipcap/rng.hpp"

namespace vipcap {

enum class Init { Zeros, Ones, Normal };

/// Declared parameter: name, shape, whether it trains, and how it starts.
struct ParamSpec {
    std::string name;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    bool trainable = true;
    Init init = Init::Normal;
    double init_std = 0.02;

    std::size_t size() const { return static_cast<std::size_t>(rows * cols); }
};

using ParameterLayout = std::vector<ParamSpec>;

std::size_t count_trainable(const ParameterLayout& layout);
std::size_t count_total(const ParameterLayout& layout);

/// Named parameter tensors. Copies are deep. A parameter is trainable iff its
/// leaf node requires a gradient.
class ParameterStore {
public:
    ParameterStore() = default;
    ParameterStore(const ParameterStore& other);
    ParameterStore& operator=(const ParameterStore& other);
    ParameterStore(ParameterStore&&) noexcept = default;
    ParameterStore& operator=(ParameterStore&&) noexcept = default;

    /// Draws every spec from `rng`, one child stream per parameter name.
    static ParameterStore materialize(const ParameterLayout& layout, const Rng& rng);

    void add(const std::string& name, Matrix value, bool trainable);
    bool contains(std::string_view name) const;
    const ag::Var& get(std::string_view name) const;
    ag::Var& get(std::string_view name);

    bool trainable(std::string_view name) const { return get(name).requires_grad(); }
    void set_trainable(std::string_view name, bool trainable);
    /// Applies `trainable` to every parameter whose name starts with `prefix`.
    void set_trainable_prefix(std::string_view prefix, bool trainable);
    void freeze_all();

    std::vector<std::string> names() const;
    std::size_t size() const noexcept { return params_.size(); }
    std::size_t count_trainable() const;

    void zero_grad();
    /// Sum of squared gradient entries over the matching parameters.
    double grad_norm_sq(const std::function<bool(const std::string&)>& select) const;
    /// Hash over name, shape, and the raw bytes of each matching parameter.
    std::uint64_t hash(const std::function<bool(const std::string&)>& select) const;

    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

private:
    std::map<std::string, ag::Var, std::less<>> params_;
};

bool has_prefix(std::string_view name, std::string_view prefix) noexcept;

}  // namespace vipcap
