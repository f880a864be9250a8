#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "kgclm/array.hpp"

namespace kgc {

enum class OptimizerKind { adam, sgd };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adam;
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Per-parameter first/second moment accumulators and a step counter.
struct OptimizerState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::size_t step_count = 0;
};

// Adaptive-moment (or plain SGD) update over a fixed parameter list.
// step() consumes the populated gradients and zeroes them.
class Optimizer {
public:
    Optimizer(std::vector<Array> params, OptimizerConfig cfg);

    // Throws if any parameter has no gradient buffer (backward never reached it).
    void step();
    void zero_grad();

    std::size_t step_count() const { return state_.step_count; }
    const OptimizerConfig& config() const { return cfg_; }
    const std::vector<Array>& params() const { return params_; }

private:
    std::vector<Array> params_;
    OptimizerConfig cfg_;
    OptimizerState state_;
};

}  // namespace kgc
