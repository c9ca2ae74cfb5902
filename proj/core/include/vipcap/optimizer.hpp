#pragma once

#include <map>
#include <string>

#include "vipcap/params.hpp"

namespace vipcap {

/// Adam over the trainable entries of a ParameterStore. State is keyed by
/// parameter name.
class Adam {
public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    /// One update from the accumulated gradients; gradients are left in place.
    void step(ParameterStore& params);
    long steps() const noexcept { return t_; }

private:
    struct Moments {
        Matrix m;
        Matrix v;
    };
    double lr_;
    double beta1_;
    double beta2_;
    double eps_;
    long t_ = 0;
    std::map<std::string, Moments, std::less<>> state_;
};

}  // namespace vipcap
