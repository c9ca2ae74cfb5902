#include "vipcap/optimizer.hpp"

#include <cmath>

namespace vipcap {

void Adam::step(ParameterStore& params) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (const auto& [name, var] : params) {
        if (!var.requires_grad()) continue;
        const Matrix g = var.grad();
        auto [it, fresh] = state_.try_emplace(name);
        Moments& s = it->second;
        if (fresh) {
            s.m = Matrix::Zero(g.rows(), g.cols());
            s.v = Matrix::Zero(g.rows(), g.cols());
        }
        s.m = beta1_ * s.m + (1.0 - beta1_) * g;
        s.v = beta2_ * s.v + (1.0 - beta2_) * g.cwiseProduct(g);
        const Matrix update = (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + eps_);
        Matrix& value = params.get(name).mutable_value();
        value -= lr_ * update;
    }
}

}  // namespace vipcap
