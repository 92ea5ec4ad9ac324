#pragma once

// Minimal reverse-mode autodiff over dense row-major tensors.
// Exactly the operations the model needs; every op registers a backward
// rule on the active tape and rejects non-finite values at its boundary.

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace njepa {

#ifdef NJEPA_REAL_DOUBLE
using real = double;
#else
using real = float;
#endif

std::int64_t shape_numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

struct TensorNode {
    std::vector<int> shape;
    std::vector<real> data;   // row-major, size == product of shape
    std::vector<real> grad;   // empty until backward touches it; else same size as data
    bool requires_grad = false;
};

void ensure_grad(TensorNode& n);

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorNode> n) : node(std::move(n)) {}

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, real value, bool requires_grad = false);
    static Tensor from_vector(std::vector<int> shape, std::vector<real> values,
                              bool requires_grad = false);
    static Tensor scalar(real value, bool requires_grad = false);

    bool defined() const { return node != nullptr; }
    const std::vector<int>& shape() const { return node->shape; }
    int ndim() const { return static_cast<int>(node->shape.size()); }
    int dim(int i) const { return node->shape[static_cast<std::size_t>(i)]; }
    std::int64_t numel() const { return static_cast<std::int64_t>(node->data.size()); }

    real* data() { return node->data.data(); }
    const real* data() const { return node->data.data(); }
    std::vector<real>& values() { return node->data; }
    const std::vector<real>& values() const { return node->data; }

    bool requires_grad() const { return node->requires_grad; }
    void set_requires_grad(bool rg) { node->requires_grad = rg; }

    bool has_grad() const { return !node->grad.empty(); }
    const std::vector<real>& grad() const { return node->grad; }
    void zero_grad() { node->grad.clear(); }

    real item() const;       // requires numel() == 1
    real grad_item() const;  // requires scalar grad present

    Tensor detach() const;   // deep copy of values, no backward edge
    Tensor clone() const;    // deep copy preserving requires_grad (leaf copy)

    std::shared_ptr<TensorNode> node;
};

// Tape of executed operations. Backward replays recorded rules in reverse.
// Intermediate (op-output) gradients are reset at the start of each backward
// pass; leaf gradients accumulate additively until explicitly zeroed.
class Tape {
public:
    void record(std::function<void()> backward_fn, std::shared_ptr<TensorNode> out);
    void backward_from(const Tensor& loss);
    void clear() { entries_.clear(); }
    std::size_t size() const { return entries_.size(); }

    static Tape* active();

    // Installs a tape as the thread-local recording target.
    class Scope {
    public:
        explicit Scope(Tape& t);
        ~Scope();
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;
    private:
        Tape* prev_;
    };

    // Suspends recording (teacher forward, feature extraction).
    class NoGrad {
    public:
        NoGrad();
        ~NoGrad();
        NoGrad(const NoGrad&) = delete;
        NoGrad& operator=(const NoGrad&) = delete;
    private:
        Tape* prev_;
    };

private:
    struct Entry {
        std::function<void()> fn;
        std::shared_ptr<TensorNode> out;
    };
    std::vector<Entry> entries_;
};

// ---- operations ------------------------------------------------------------

// Matrix product over the trailing two axes. Leading axes must match exactly,
// or `b` may be 2-D and is then broadcast across `a`'s leading axes.
Tensor matmul(const Tensor& a, const Tensor& b);

// Elementwise; `b` may have a shape that is a suffix of `a`'s shape and is
// then broadcast across the leading axes (bias/row-table addition).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, real c);

Tensor gelu(const Tensor& a);  // tanh approximation, analytic derivative
Tensor softmax(const Tensor& a, int axis);
// Normalizes over the last axis; gain/bias are 1-D of that extent.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  real eps = real(1e-6));

Tensor mean(const Tensor& a, int axis);
Tensor sum(const Tensor& a);  // full reduction to a scalar
Tensor sqrt(const Tensor& a);
Tensor square(const Tensor& a);
Tensor l2_norm(const Tensor& a, int axis);  // axis is dropped from the shape

Tensor detach(const Tensor& a);
void backward(const Tensor& loss);  // requires an active tape and scalar loss

// Shape plumbing (all materialize; data stays dense row-major).
Tensor reshape(const Tensor& a, std::vector<int> shape);
Tensor permute(const Tensor& a, const std::vector<int>& axes);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor narrow(const Tensor& a, int axis, int start, int len);
Tensor gather_rows(const Tensor& a, const std::vector<int>& rows);  // a is 2-D
Tensor expand_batch(const Tensor& a, int batch);  // prepend axis of extent `batch`

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

}  // namespace njepa
