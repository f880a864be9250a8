#include "kgclm/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace kgc {

Optimizer::Optimizer(std::vector<Array> params, OptimizerConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
    state_.m.resize(params_.size());
    state_.v.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
        state_.m[i].assign(params_[i].numel(), 0.0);
        state_.v[i].assign(params_[i].numel(), 0.0);
    }
}

void Optimizer::step() {
    for (auto& p : params_)
        if (!p.has_grad())
            throw std::logic_error("Optimizer::step: parameter has no gradient");
    state_.step_count += 1;
    const double t = double(state_.step_count);
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t);
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Array& p = params_[i];
        auto& g = p.grad();
        if (cfg_.kind == OptimizerKind::sgd) {
            for (std::size_t j = 0; j < p.numel(); ++j) p[j] -= cfg_.lr * g[j];
        } else {
            auto& m = state_.m[i];
            auto& v = state_.v[i];
            for (std::size_t j = 0; j < p.numel(); ++j) {
                m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
                v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
                const double mhat = m[j] / bc1;
                const double vhat = v[j] / bc2;
                p[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
        }
    }
    zero_grad();
}

void Optimizer::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

}  // namespace kgc
