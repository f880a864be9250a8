#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace kgc {

class Tape;

namespace detail {

// One node of the computation graph. Leaves (parameters, constants) have no
// backward function; interior nodes pull their adjoint into their parents.
struct ArrayNode {
    std::vector<std::size_t> shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<ArrayNode>> parents;
    std::function<void(ArrayNode&)> backward;

    std::size_t numel() const { return value.size(); }
    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
};

}  // namespace detail

// Dense row-major array of doubles with value semantics over a shared node.
// Copies alias the same storage; values are written once per forward pass.
class Array {
public:
    Array() = default;

    static Array zeros(std::vector<std::size_t> shape, bool requires_grad = false);
    static Array full(std::vector<std::size_t> shape, double v, bool requires_grad = false);
    static Array from_values(std::vector<std::size_t> shape, std::vector<double> values,
                             bool requires_grad = false);
    static Array scalar(double v);

    bool defined() const { return node_ != nullptr; }
    const std::vector<std::size_t>& shape() const { return node_->shape; }
    std::size_t ndim() const { return node_->shape.size(); }
    std::size_t dim(std::size_t i) const { return node_->shape[i]; }
    std::size_t numel() const { return node_->value.size(); }
    std::size_t rows() const { return node_->shape[0]; }
    std::size_t cols() const { return node_->shape[1]; }

    double* data() { return node_->value.data(); }
    const double* data() const { return node_->value.data(); }
    double operator[](std::size_t i) const { return node_->value[i]; }
    double& operator[](std::size_t i) { return node_->value[i]; }
    double at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }
    double& at(std::size_t r, std::size_t c) { return node_->value[r * cols() + c]; }

    // Scalar extraction; throws unless numel() == 1.
    double item() const;

    bool requires_grad() const { return node_->requires_grad; }
    bool has_grad() const { return !node_->grad.empty(); }
    std::vector<double>& grad() { return node_->grad; }
    const std::vector<double>& grad() const { return node_->grad; }
    void zero_grad();

    // True when every entry is finite.
    bool all_finite() const;

    bool same_node(const Array& other) const { return node_ == other.node_; }

private:
    friend class Tape;
    explicit Array(std::shared_ptr<detail::ArrayNode> n) : node_(std::move(n)) {}
    std::shared_ptr<detail::ArrayNode> node_;
};

// Records the forward pass and replays adjoints in reverse creation order,
// which is a valid reverse-topological order because every op's inputs are
// recorded before the op itself. Each recorded node is visited exactly once.
class Tape {
public:
    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

    bool grad_enabled() const { return grad_enabled_; }
    std::size_t recorded() const { return order_.size(); }
    void clear() { order_.clear(); }

    // ---- elementwise ----
    Array add(const Array& a, const Array& b);
    Array sub(const Array& a, const Array& b);
    Array mul(const Array& a, const Array& b);
    Array div(const Array& a, const Array& b);
    Array scale(const Array& a, double c);
    Array neg(const Array& a);
    Array abs(const Array& a);  // subgradient at 0 is 0
    Array exp(const Array& a);
    Array log(const Array& a);
    Array sqrt(const Array& a);
    Array sin(const Array& a);
    Array cos(const Array& a);
    Array relu(const Array& a);
    Array gelu(const Array& a);
    Array softplus(const Array& a);  // overflow-safe log(1+e^x)

    // ---- linear algebra ----
    Array matmul(const Array& a, const Array& b);     // [m,k] x [k,n]
    Array matmul_nt(const Array& a, const Array& b);  // [m,k] x [n,k]^T -> [m,n]
    Array dot(const Array& a, const Array& b);        // [d] . [d] -> scalar

    // ---- row-structured ops ----
    // Each row becomes a probability distribution; -inf entries map to 0.
    // A row that is entirely -inf is an error.
    Array softmax_rows(const Array& x);
    Array layer_norm_rows(const Array& x, const Array& gain, const Array& bias,
                          double eps = 1e-5);
    // Weighted mean of per-row negative log-likelihood of integer targets.
    // weights[i] == 0 excludes row i; all-zero weights is an error.
    Array cross_entropy_rows(const Array& logits, const std::vector<int>& targets,
                             const std::vector<double>& weights);
    Array add_row_broadcast(const Array& x, const Array& bias);  // [n,d] + [d]

    // ---- indexing / assembly ----
    Array gather_rows(const Array& table, const std::vector<int>& ids);
    Array row(const Array& x, std::size_t r);  // -> [d]
    Array slice_rows(const Array& x, std::size_t start, std::size_t count);
    Array slice_cols(const Array& x, std::size_t start, std::size_t count);
    Array slice(const Array& v, std::size_t start, std::size_t count);  // 1-D
    Array concat_rows(const std::vector<Array>& parts);
    Array concat_cols(const std::vector<Array>& parts);
    Array stack_rows(const std::vector<Array>& vecs);  // k x [d] -> [k,d]

    // ---- reductions ----
    Array sum(const Array& a);
    Array mean(const Array& a);
    Array mean_rows(const Array& x);  // [n,d] -> [d]
    Array row_sums(const Array& x);   // [n,d] -> [n]
    Array l1_norm(const Array& a);
    Array l2_norm(const Array& a);

    // Seeds d(loss)/d(loss) = 1 and replays the tape in reverse. Gradients
    // accumulate additively across fan-out. Loss must be scalar.
    void backward(const Array& loss);

    // Zeros the grad buffers of every recorded node (leaves are the caller's
    // responsibility). Lets one tape run several backward passes.
    void zero_grads();

private:
    Array make(std::vector<std::size_t> shape, std::vector<double> value,
               std::vector<std::shared_ptr<detail::ArrayNode>> parents,
               std::function<void(detail::ArrayNode&)> backward_fn);
    template <class Fwd, class Dfdx>
    Array unary(const Array& a, Fwd f, Dfdx df);

    std::vector<std::shared_ptr<detail::ArrayNode>> order_;
    bool grad_enabled_ = true;
};

}  // namespace kgc
