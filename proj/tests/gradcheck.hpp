#pragma once

// Central finite-difference oracle used across the test suites. Lives in
// test code only and never calls into the backward pass it checks.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "kgclm/array.hpp"

namespace kgc::test {

struct GradCheckOptions {
    double step = 1e-4;
    // Effective relative error: |analytic - fd| / max(|analytic|, |fd|, 1e-3).
    // The floor keeps finite-difference noise on near-zero gradients from
    // registering as huge relative errors.
    double denom_floor = 1e-3;
    std::size_t stride = 1;  // check every stride-th element of each parameter
};

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::size_t checked = 0;
};

// build must construct the loss from scratch on the given tape, reading the
// current parameter values.
inline GradCheckResult check_gradients(const std::function<Array(Tape&)>& build,
                                       std::vector<Array> params,
                                       GradCheckOptions opts = {}) {
    // Analytic pass.
    for (auto& p : params) p.zero_grad();
    Tape tape;
    Array loss = build(tape);
    tape.backward(loss);
    std::vector<std::vector<double>> analytic;
    for (auto& p : params) {
        if (p.has_grad())
            analytic.push_back(p.grad());
        else
            analytic.push_back(std::vector<double>(p.numel(), 0.0));
    }

    auto value = [&]() {
        Tape t(false);
        return build(t).item();
    };

    GradCheckResult res;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Array& p = params[pi];
        for (std::size_t j = 0; j < p.numel(); j += opts.stride) {
            const double orig = p[j];
            p[j] = orig + opts.step;
            const double fp = value();
            p[j] = orig - opts.step;
            const double fm = value();
            p[j] = orig;
            const double fd = (fp - fm) / (2.0 * opts.step);
            const double a = analytic[pi][j];
            const double denom = std::max({std::fabs(a), std::fabs(fd), opts.denom_floor});
            res.max_rel_err = std::max(res.max_rel_err, std::fabs(a - fd) / denom);
            res.checked += 1;
        }
    }
    return res;
}

}  // namespace kgc::test
