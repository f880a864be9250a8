#include "kgclm/array.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace kgc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

void require(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
}

// C[m,n] += A[m,k] * B[k,n]
void mm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
           std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        double* ci = c + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double av = ai[kk];
            if (av == 0.0) continue;
            const double* bk = b + kk * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += av * bk[j];
        }
    }
}

// C[m,n] += A[m,k] * B[n,k]^T
void mm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
           std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        double* ci = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double* bj = b + j * k;
            double acc = 0.0;
            for (std::size_t kk = 0; kk < k; ++kk) acc += ai[kk] * bj[kk];
            ci[j] += acc;
        }
    }
}

// C[k,n] += A[m,k]^T * B[m,n]
void mm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
           std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        const double* bi = b + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double av = ai[kk];
            if (av == 0.0) continue;
            double* ck = c + kk * n;
            for (std::size_t j = 0; j < n; ++j) ck[j] += av * bi[j];
        }
    }
}

}  // namespace

// ---------------------------------------------------------------- Array

Array Array::zeros(std::vector<std::size_t> shape, bool requires_grad) {
    auto n = std::make_shared<detail::ArrayNode>();
    n->value.assign(shape_numel(shape), 0.0);
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return Array(std::move(n));
}

Array Array::full(std::vector<std::size_t> shape, double v, bool requires_grad) {
    auto n = std::make_shared<detail::ArrayNode>();
    n->value.assign(shape_numel(shape), v);
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return Array(std::move(n));
}

Array Array::from_values(std::vector<std::size_t> shape, std::vector<double> values,
                         bool requires_grad) {
    require(shape_numel(shape) == values.size(), "Array::from_values: shape/data mismatch");
    auto n = std::make_shared<detail::ArrayNode>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    return Array(std::move(n));
}

Array Array::scalar(double v) { return from_values({}, {v}); }

double Array::item() const {
    require(numel() == 1, "Array::item: not a scalar");
    return node_->value[0];
}

void Array::zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

bool Array::all_finite() const {
    for (double v : node_->value)
        if (!std::isfinite(v)) return false;
    return true;
}

// ---------------------------------------------------------------- Tape

Array Tape::make(std::vector<std::size_t> shape, std::vector<double> value,
                 std::vector<std::shared_ptr<detail::ArrayNode>> parents,
                 std::function<void(detail::ArrayNode&)> backward_fn) {
    auto n = std::make_shared<detail::ArrayNode>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    bool needs = false;
    if (grad_enabled_) {
        for (const auto& p : parents)
            if (p->requires_grad) needs = true;
    }
    if (needs) {
        n->requires_grad = true;
        n->parents = std::move(parents);
        n->backward = std::move(backward_fn);
        order_.push_back(n);
    }
    return Array(std::move(n));
}

template <class Fwd, class Dfdx>
Array Tape::unary(const Array& a, Fwd f, Dfdx df) {
    std::vector<double> out(a.numel());
    const double* x = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i]);
    return make(a.shape(), std::move(out), {a.node_}, [df](detail::ArrayNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < self.value.size(); ++i)
            p.grad[i] += self.grad[i] * df(p.value[i], self.value[i]);
    });
}

Array Tape::add(const Array& a, const Array& b) {
    require(a.shape() == b.shape(), "add: shape mismatch");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
    return make(a.shape(), std::move(out), {a.node_, b.node_}, [](detail::ArrayNode& self) {
        for (int s = 0; s < 2; ++s) {
            auto& p = *self.parents[s];
            if (!p.requires_grad) continue;
            p.ensure_grad();
            for (std::size_t i = 0; i < self.value.size(); ++i) p.grad[i] += self.grad[i];
        }
    });
}

Array Tape::sub(const Array& a, const Array& b) {
    require(a.shape() == b.shape(), "sub: shape mismatch");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
    return make(a.shape(), std::move(out), {a.node_, b.node_}, [](detail::ArrayNode& self) {
        for (int s = 0; s < 2; ++s) {
            auto& p = *self.parents[s];
            if (!p.requires_grad) continue;
            p.ensure_grad();
            const double sgn = s == 0 ? 1.0 : -1.0;
            for (std::size_t i = 0; i < self.value.size(); ++i) p.grad[i] += sgn * self.grad[i];
        }
    });
}

Array Tape::mul(const Array& a, const Array& b) {
    require(a.shape() == b.shape(), "mul: shape mismatch");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
    return make(a.shape(), std::move(out), {a.node_, b.node_}, [](detail::ArrayNode& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < self.value.size(); ++i)
                pa.grad[i] += self.grad[i] * pb.value[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < self.value.size(); ++i)
                pb.grad[i] += self.grad[i] * pa.value[i];
        }
    });
}

Array Tape::div(const Array& a, const Array& b) {
    require(a.shape() == b.shape(), "div: shape mismatch");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] / b[i];
    return make(a.shape(), std::move(out), {a.node_, b.node_}, [](detail::ArrayNode& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < self.value.size(); ++i)
                pa.grad[i] += self.grad[i] / pb.value[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < self.value.size(); ++i)
                pb.grad[i] -= self.grad[i] * self.value[i] / pb.value[i];
        }
    });
}

Array Tape::scale(const Array& a, double c) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * c;
    return make(a.shape(), std::move(out), {a.node_}, [c](detail::ArrayNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < self.value.size(); ++i) p.grad[i] += c * self.grad[i];
    });
}

Array Tape::neg(const Array& a) {
    return unary(
        a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Array Tape::abs(const Array& a) {
    return unary(
        a, [](double x) { return std::fabs(x); },
        [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Array Tape::exp(const Array& a) {
    return unary(
        a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Array Tape::log(const Array& a) {
    return unary(
        a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Array Tape::sqrt(const Array& a) {
    return unary(
        a, [](double x) { return std::sqrt(x); },
        [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Array Tape::sin(const Array& a) {
    return unary(
        a, [](double x) { return std::sin(x); }, [](double x, double) { return std::cos(x); });
}

Array Tape::cos(const Array& a) {
    return unary(
        a, [](double x) { return std::cos(x); }, [](double x, double) { return -std::sin(x); });
}

Array Tape::relu(const Array& a) {
    return unary(
        a, [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Array Tape::gelu(const Array& a) {
    constexpr double inv_sqrt2 = 0.7071067811865475244;
    constexpr double inv_sqrt2pi = 0.3989422804014326779;
    return unary(
        a, [=](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
        [=](double x, double) {
            return 0.5 * (1.0 + std::erf(x * inv_sqrt2)) +
                   x * inv_sqrt2pi * std::exp(-0.5 * x * x);
        });
}

Array Tape::softplus(const Array& a) {
    // log(1+e^x) = max(x,0) + log1p(e^{-|x|})
    return unary(
        a, [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x))); },
        [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

Array Tape::matmul(const Array& a, const Array& b) {
    require(a.ndim() == 2 && b.ndim() == 2, "matmul: operands must be 2-D");
    require(a.cols() == b.rows(), "matmul: inner dimensions disagree");
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    std::vector<double> out(m * n, 0.0);
    mm_nn(a.data(), b.data(), out.data(), m, k, n);
    return make({m, n}, std::move(out), {a.node_, b.node_},
                [m, k, n](detail::ArrayNode& self) {
                    auto& pa = *self.parents[0];
                    auto& pb = *self.parents[1];
                    if (pa.requires_grad) {
                        pa.ensure_grad();
                        mm_nt(self.grad.data(), pb.value.data(), pa.grad.data(), m, n, k);
                    }
                    if (pb.requires_grad) {
                        pb.ensure_grad();
                        mm_tn(pa.value.data(), self.grad.data(), pb.grad.data(), m, k, n);
                    }
                });
}

Array Tape::matmul_nt(const Array& a, const Array& b) {
    require(a.ndim() == 2 && b.ndim() == 2, "matmul_nt: operands must be 2-D");
    require(a.cols() == b.cols(), "matmul_nt: inner dimensions disagree");
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    std::vector<double> out(m * n, 0.0);
    mm_nt(a.data(), b.data(), out.data(), m, k, n);
    return make({m, n}, std::move(out), {a.node_, b.node_},
                [m, k, n](detail::ArrayNode& self) {
                    auto& pa = *self.parents[0];
                    auto& pb = *self.parents[1];
                    if (pa.requires_grad) {
                        pa.ensure_grad();
                        mm_nn(self.grad.data(), pb.value.data(), pa.grad.data(), m, n, k);
                    }
                    if (pb.requires_grad) {
                        pb.ensure_grad();
                        mm_tn(self.grad.data(), pa.value.data(), pb.grad.data(), m, n, k);
                    }
                });
}

Array Tape::dot(const Array& a, const Array& b) {
    require(a.ndim() == 1 && b.ndim() == 1 && a.numel() == b.numel(), "dot: need equal 1-D arrays");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) acc += a[i] * b[i];
    return make({}, {acc}, {a.node_, b.node_}, [](detail::ArrayNode& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        const double g = self.grad[0];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < pa.value.size(); ++i) pa.grad[i] += g * pb.value[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < pb.value.size(); ++i) pb.grad[i] += g * pa.value[i];
        }
    });
}

Array Tape::softmax_rows(const Array& x) {
    require(x.ndim() == 2, "softmax_rows: need 2-D input");
    const std::size_t m = x.rows(), n = x.cols();
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i) {
        const double* xi = x.data() + i * n;
        double mx = -kInf;
        for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, xi[j]);
        if (mx == -kInf) throw std::invalid_argument("softmax_rows: row is entirely -inf");
        double denom = 0.0;
        double* oi = out.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            oi[j] = xi[j] == -kInf ? 0.0 : std::exp(xi[j] - mx);
            denom += oi[j];
        }
        const double inv = 1.0 / denom;
        for (std::size_t j = 0; j < n; ++j) oi[j] *= inv;
    }
    return make({m, n}, std::move(out), {x.node_}, [m, n](detail::ArrayNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < m; ++i) {
            const double* pi = self.value.data() + i * n;
            const double* gi = self.grad.data() + i * n;
            double dotpg = 0.0;
            for (std::size_t j = 0; j < n; ++j) dotpg += pi[j] * gi[j];
            double* out_g = p.grad.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) out_g[j] += pi[j] * (gi[j] - dotpg);
        }
    });
}

Array Tape::layer_norm_rows(const Array& x, const Array& gain, const Array& bias, double eps) {
    require(x.ndim() == 2, "layer_norm_rows: need 2-D input");
    const std::size_t m = x.rows(), n = x.cols();
    require(gain.ndim() == 1 && gain.numel() == n, "layer_norm_rows: gain size mismatch");
    require(bias.ndim() == 1 && bias.numel() == n, "layer_norm_rows: bias size mismatch");
    std::vector<double> out(m * n);
    std::vector<double> inv_sd(m);
    std::vector<double> xhat(m * n);
    for (std::size_t i = 0; i < m; ++i) {
        const double* xi = x.data() + i * n;
        double mu = 0.0;
        for (std::size_t j = 0; j < n; ++j) mu += xi[j];
        mu /= double(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double d = xi[j] - mu;
            var += d * d;
        }
        var /= double(n);
        const double inv = 1.0 / std::sqrt(var + eps);
        inv_sd[i] = inv;
        for (std::size_t j = 0; j < n; ++j) {
            const double h = (xi[j] - mu) * inv;
            xhat[i * n + j] = h;
            out[i * n + j] = h * gain[j] + bias[j];
        }
    }
    return make({m, n}, std::move(out), {x.node_, gain.node_, bias.node_},
                [m, n, inv_sd = std::move(inv_sd),
                 xhat = std::move(xhat)](detail::ArrayNode& self) {
                    auto& px = *self.parents[0];
                    auto& pg = *self.parents[1];
                    auto& pb = *self.parents[2];
                    for (std::size_t i = 0; i < m; ++i) {
                        const double* gi = self.grad.data() + i * n;
                        const double* hi = xhat.data() + i * n;
                        if (pg.requires_grad) {
                            pg.ensure_grad();
                            for (std::size_t j = 0; j < n; ++j) pg.grad[j] += gi[j] * hi[j];
                        }
                        if (pb.requires_grad) {
                            pb.ensure_grad();
                            for (std::size_t j = 0; j < n; ++j) pb.grad[j] += gi[j];
                        }
                        if (px.requires_grad) {
                            px.ensure_grad();
                            double mean_q = 0.0, mean_qh = 0.0;
                            for (std::size_t j = 0; j < n; ++j) {
                                const double q = gi[j] * pg.value[j];
                                mean_q += q;
                                mean_qh += q * hi[j];
                            }
                            mean_q /= double(n);
                            mean_qh /= double(n);
                            double* out_g = px.grad.data() + i * n;
                            for (std::size_t j = 0; j < n; ++j) {
                                const double q = gi[j] * pg.value[j];
                                out_g[j] += (q - mean_q - hi[j] * mean_qh) * inv_sd[i];
                            }
                        }
                    }
                });
}

Array Tape::cross_entropy_rows(const Array& logits, const std::vector<int>& targets,
                               const std::vector<double>& weights) {
    require(logits.ndim() == 2, "cross_entropy_rows: need 2-D logits");
    const std::size_t m = logits.rows(), n = logits.cols();
    require(targets.size() == m && weights.size() == m,
            "cross_entropy_rows: targets/weights size mismatch");
    double wsum = 0.0;
    for (double w : weights) wsum += w;
    if (wsum <= 0.0)
        throw std::invalid_argument("cross_entropy_rows: no weighted target positions");
    double loss = 0.0;
    std::vector<double> lse(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        if (weights[i] == 0.0) continue;
        require(targets[i] >= 0 && std::size_t(targets[i]) < n,
                "cross_entropy_rows: target id out of range");
        const double* xi = logits.data() + i * n;
        double mx = xi[0];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xi[j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < n; ++j) denom += std::exp(xi[j] - mx);
        lse[i] = mx + std::log(denom);
        loss += weights[i] * (lse[i] - xi[std::size_t(targets[i])]);
    }
    loss /= wsum;
    return make({}, {loss}, {logits.node_},
                [m, n, targets, weights, wsum, lse = std::move(lse)](detail::ArrayNode& self) {
                    auto& p = *self.parents[0];
                    if (!p.requires_grad) return;
                    p.ensure_grad();
                    const double g = self.grad[0];
                    for (std::size_t i = 0; i < m; ++i) {
                        if (weights[i] == 0.0) continue;
                        const double c = g * weights[i] / wsum;
                        const double* xi = p.value.data() + i * n;
                        double* gi = p.grad.data() + i * n;
                        for (std::size_t j = 0; j < n; ++j)
                            gi[j] += c * std::exp(xi[j] - lse[i]);
                        gi[std::size_t(targets[i])] -= c;
                    }
                });
}

Array Tape::add_row_broadcast(const Array& x, const Array& bias) {
    require(x.ndim() == 2, "add_row_broadcast: need 2-D input");
    const std::size_t m = x.rows(), n = x.cols();
    require(bias.ndim() == 1 && bias.numel() == n, "add_row_broadcast: bias size mismatch");
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x.at(i, j) + bias[j];
    return make({m, n}, std::move(out), {x.node_, bias.node_}, [m, n](detail::ArrayNode& self) {
        auto& px = *self.parents[0];
        auto& pb = *self.parents[1];
        if (px.requires_grad) {
            px.ensure_grad();
            for (std::size_t i = 0; i < m * n; ++i) px.grad[i] += self.grad[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) pb.grad[j] += self.grad[i * n + j];
        }
    });
}

Array Tape::gather_rows(const Array& table, const std::vector<int>& ids) {
    require(table.ndim() == 2, "gather_rows: need 2-D table");
    const std::size_t n = table.cols();
    std::vector<double> out(ids.size() * n);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        require(ids[i] >= 0 && std::size_t(ids[i]) < table.rows(),
                "gather_rows: row id out of range");
        std::copy_n(table.data() + std::size_t(ids[i]) * n, n, out.data() + i * n);
    }
    return make({ids.size(), n}, std::move(out), {table.node_},
                [ids, n](detail::ArrayNode& self) {
                    auto& p = *self.parents[0];
                    if (!p.requires_grad) return;
                    p.ensure_grad();
                    for (std::size_t i = 0; i < ids.size(); ++i) {
                        double* dst = p.grad.data() + std::size_t(ids[i]) * n;
                        const double* src = self.grad.data() + i * n;
                        for (std::size_t j = 0; j < n; ++j) dst[j] += src[j];
                    }
                });
}

Array Tape::row(const Array& x, std::size_t r) {
    require(x.ndim() == 2 && r < x.rows(), "row: index out of range");
    const std::size_t n = x.cols();
    std::vector<double> out(x.data() + r * n, x.data() + (r + 1) * n);
    return make({n}, std::move(out), {x.node_}, [r, n](detail::ArrayNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t j = 0; j < n; ++j) p.grad[r * n + j] += self.grad[j];
    });
}

Array Tape::slice_rows(const Array& x, std::size_t start, std::size_t count) {
    require(x.ndim() == 2 && start + count <= x.rows(), "slice_rows: range out of bounds");
    const std::size_t n = x.cols();
    std::vector<double> out(x.data() + start * n, x.data() + (start + count) * n);
    return make({count, n}, std::move(out), {x.node_}, [start, n](detail::ArrayNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < self.value.size(); ++i)
            p.grad[start * n + i] += self.grad[i];
    });
}

Array Tape::slice_cols(const Array& x, std::size_t start, std::size_t count) {
    require(x.ndim() == 2 && start + count <= x.cols(), "slice_cols: range out of bounds");
    const std::size_t m = x.rows(), n = x.cols();
    std::vector<double> out(m * count);
    for (std::size_t i = 0; i < m; ++i)
        std::copy_n(x.data() + i * n + start, count, out.data() + i * count);
    return make({m, count}, std::move(out), {x.node_},
                [m, n, start, count](detail::ArrayNode& self) {
                    auto& p = *self.parents[0];
                    if (!p.requires_grad) return;
                    p.ensure_grad();
                    for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < count; ++j)
                            p.grad[i * n + start + j] += self.grad[i * count + j];
                });
}

Array Tape::slice(const Array& v, std::size_t start, std::size_t count) {
    require(v.ndim() == 1 && start + count <= v.numel(), "slice: range out of bounds");
    std::vector<double> out(v.data() + start, v.data() + start + count);
    return make({count}, std::move(out), {v.node_}, [start](detail::ArrayNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < self.value.size(); ++i) p.grad[start + i] += self.grad[i];
    });
}

Array Tape::concat_rows(const std::vector<Array>& parts) {
    require(!parts.empty(), "concat_rows: empty input");
    const std::size_t n = parts[0].cols();
    std::size_t m = 0;
    for (const auto& p : parts) {
        require(p.ndim() == 2 && p.cols() == n, "concat_rows: column mismatch");
        m += p.rows();
    }
    std::vector<double> out;
    out.reserve(m * n);
    std::vector<std::shared_ptr<detail::ArrayNode>> parents;
    std::vector<std::size_t> row_counts;
    for (const auto& p : parts) {
        out.insert(out.end(), p.data(), p.data() + p.numel());
        parents.push_back(p.node_);
        row_counts.push_back(p.rows());
    }
    return make({m, n}, std::move(out), std::move(parents),
                [n, row_counts = std::move(row_counts)](detail::ArrayNode& self) {
                    std::size_t off = 0;
                    for (std::size_t s = 0; s < self.parents.size(); ++s) {
                        auto& p = *self.parents[s];
                        const std::size_t cnt = row_counts[s] * n;
                        if (p.requires_grad) {
                            p.ensure_grad();
                            for (std::size_t i = 0; i < cnt; ++i) p.grad[i] += self.grad[off + i];
                        }
                        off += cnt;
                    }
                });
}

Array Tape::concat_cols(const std::vector<Array>& parts) {
    require(!parts.empty(), "concat_cols: empty input");
    const std::size_t m = parts[0].rows();
    std::size_t n = 0;
    for (const auto& p : parts) {
        require(p.ndim() == 2 && p.rows() == m, "concat_cols: row mismatch");
        n += p.cols();
    }
    std::vector<double> out(m * n);
    std::vector<std::shared_ptr<detail::ArrayNode>> parents;
    std::vector<std::size_t> col_counts;
    std::size_t off = 0;
    for (const auto& p : parts) {
        for (std::size_t i = 0; i < m; ++i)
            std::copy_n(p.data() + i * p.cols(), p.cols(), out.data() + i * n + off);
        off += p.cols();
        parents.push_back(p.node_);
        col_counts.push_back(p.cols());
    }
    return make({m, n}, std::move(out), std::move(parents),
                [m, n, col_counts = std::move(col_counts)](detail::ArrayNode& self) {
                    std::size_t start = 0;
                    for (std::size_t s = 0; s < self.parents.size(); ++s) {
                        auto& p = *self.parents[s];
                        const std::size_t c = col_counts[s];
                        if (p.requires_grad) {
                            p.ensure_grad();
                            for (std::size_t i = 0; i < m; ++i)
                                for (std::size_t j = 0; j < c; ++j)
                                    p.grad[i * c + j] += self.grad[i * n + start + j];
                        }
                        start += c;
                    }
                });
}

Array Tape::stack_rows(const std::vector<Array>& vecs) {
    require(!vecs.empty(), "stack_rows: empty input");
    const std::size_t n = vecs[0].numel();
    std::vector<double> out;
    out.reserve(vecs.size() * n);
    std::vector<std::shared_ptr<detail::ArrayNode>> parents;
    for (const auto& v : vecs) {
        require(v.ndim() == 1 && v.numel() == n, "stack_rows: need equal-length 1-D arrays");
        out.insert(out.end(), v.data(), v.data() + n);
        parents.push_back(v.node_);
    }
    return make({vecs.size(), n}, std::move(out), std::move(parents),
                [n](detail::ArrayNode& self) {
                    for (std::size_t s = 0; s < self.parents.size(); ++s) {
                        auto& p = *self.parents[s];
                        if (!p.requires_grad) continue;
                        p.ensure_grad();
                        for (std::size_t j = 0; j < n; ++j) p.grad[j] += self.grad[s * n + j];
                    }
                });
}

Array Tape::row_sums(const Array& x) {
    require(x.ndim() == 2, "row_sums: need 2-D input");
    const std::size_t m = x.rows(), n = x.cols();
    std::vector<double> out(m, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i] += x.at(i, j);
    return make({m}, std::move(out), {x.node_}, [m, n](detail::ArrayNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) p.grad[i * n + j] += self.grad[i];
    });
}

Array Tape::sum(const Array& a) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) acc += a[i];
    return make({}, {acc}, {a.node_}, [](detail::ArrayNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < p.value.size(); ++i) p.grad[i] += self.grad[0];
    });
}

Array Tape::mean(const Array& a) {
    require(a.numel() > 0, "mean: empty array");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) acc += a[i];
    const double inv = 1.0 / double(a.numel());
    return make({}, {acc * inv}, {a.node_}, [inv](detail::ArrayNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < p.value.size(); ++i) p.grad[i] += self.grad[0] * inv;
    });
}

Array Tape::mean_rows(const Array& x) {
    require(x.ndim() == 2 && x.rows() > 0, "mean_rows: need nonempty 2-D input");
    const std::size_t m = x.rows(), n = x.cols();
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j] += x.at(i, j);
    const double inv = 1.0 / double(m);
    for (double& v : out) v *= inv;
    return make({n}, std::move(out), {x.node_}, [m, n, inv](detail::ArrayNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) p.grad[i * n + j] += self.grad[j] * inv;
    });
}

Array Tape::l1_norm(const Array& a) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) acc += std::fabs(a[i]);
    return make({}, {acc}, {a.node_}, [](detail::ArrayNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        const double g = self.grad[0];
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double x = p.value[i];
            p.grad[i] += g * (x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0));
        }
    });
}

Array Tape::l2_norm(const Array& a) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) acc += a[i] * a[i];
    const double norm = std::sqrt(acc);
    return make({}, {norm}, {a.node_}, [norm](detail::ArrayNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad || norm == 0.0) return;
        p.ensure_grad();
        const double g = self.grad[0] / norm;
        for (std::size_t i = 0; i < p.value.size(); ++i) p.grad[i] += g * p.value[i];
    });
}

void Tape::zero_grads() {
    for (auto& n : order_)
        if (!n->grad.empty()) std::fill(n->grad.begin(), n->grad.end(), 0.0);
}

void Tape::backward(const Array& loss) {
    require(loss.defined() && loss.numel() == 1, "backward: loss must be a scalar");
    if (!loss.node_->requires_grad) return;  // no parameters reachable
    loss.node_->ensure_grad();
    loss.node_->grad[0] += 1.0;
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
        detail::ArrayNode& n = **it;
        if (n.backward && !n.grad.empty()) n.backward(n);
    }
}

}  // namespace kgc
