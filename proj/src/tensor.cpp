#include "njepa/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace njepa {

std::int64_t shape_numel(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw std::invalid_argument("shape extents must be positive, got " + shape_str(shape));
        n *= d;
    }
    return n;
}

std::string shape_str(const std::vector<int>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

void ensure_grad(TensorNode& n) {
    if (n.grad.empty()) n.grad.assign(n.data.size(), real(0));
}

static void check_finite(const TensorNode& n, const char* op) {
    for (real v : n.data) {
        if (!std::isfinite(v)) {
            throw std::runtime_error(std::string(op) + ": non-finite value in output of shape " +
                                     shape_str(n.shape));
        }
    }
}

static std::shared_ptr<TensorNode> make_node(std::vector<int> shape) {
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->data.assign(static_cast<std::size_t>(shape_numel(n->shape)), real(0));
    return n;
}

// ---- Tensor ----------------------------------------------------------------

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    auto n = make_node(std::move(shape));
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::full(std::vector<int> shape, real value, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    std::fill(t.node->data.begin(), t.node->data.end(), value);
    return t;
}

Tensor Tensor::from_vector(std::vector<int> shape, std::vector<real> values, bool requires_grad) {
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    if (static_cast<std::int64_t>(values.size()) != shape_numel(n->shape)) {
        throw std::invalid_argument("from_vector: " + std::to_string(values.size()) +
                                    " values for shape " + shape_str(n->shape));
    }
    n->data = std::move(values);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::scalar(real value, bool requires_grad) {
    return from_vector({1}, {value}, requires_grad);
}

real Tensor::item() const {
    if (numel() != 1) throw std::logic_error("item: tensor has shape " + shape_str(shape()));
    return node->data[0];
}

real Tensor::grad_item() const {
    if (numel() != 1 || node->grad.size() != 1) throw std::logic_error("grad_item: no scalar grad");
    return node->grad[0];
}

Tensor Tensor::detach() const {
    auto n = std::make_shared<TensorNode>();
    n->shape = node->shape;
    n->data = node->data;
    n->requires_grad = false;
    return Tensor(std::move(n));
}

Tensor Tensor::clone() const {
    auto n = std::make_shared<TensorNode>();
    n->shape = node->shape;
    n->data = node->data;
    n->requires_grad = node->requires_grad;
    return Tensor(std::move(n));
}

// ---- Tape ------------------------------------------------------------------

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape* Tape::active() { return g_active_tape; }

Tape::Scope::Scope(Tape& t) : prev_(g_active_tape) { g_active_tape = &t; }
Tape::Scope::~Scope() { g_active_tape = prev_; }

Tape::NoGrad::NoGrad() : prev_(g_active_tape) { g_active_tape = nullptr; }
Tape::NoGrad::~NoGrad() { g_active_tape = prev_; }

void Tape::record(std::function<void()> backward_fn, std::shared_ptr<TensorNode> out) {
    entries_.push_back(Entry{std::move(backward_fn), std::move(out)});
}

void Tape::backward_from(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw std::invalid_argument("backward: loss must be a defined scalar");
    }
    // Fresh transient gradients for every op output; leaf grads are untouched
    // here, so repeated backward calls accumulate into leaves.
    for (auto& e : entries_) e.out->grad.assign(e.out->data.size(), real(0));
    ensure_grad(*loss.node);
    loss.node->grad[0] += real(1);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->fn();
}

void backward(const Tensor& loss) {
    Tape* t = Tape::active();
    if (!t) throw std::logic_error("backward: no active tape");
    t->backward_from(loss);
}

// ---- matmul kernels ---------------------------------------------------------
// All kernels accumulate into C; callers zero C when needed.

// C(M,N) += A(M,K) * B(K,N)
static void addmm(real* C, const real* A, const real* B, int M, int K, int N) {
    for (int i = 0; i < M; ++i) {
        real* c = C + static_cast<std::size_t>(i) * N;
        const real* a = A + static_cast<std::size_t>(i) * K;
        for (int k = 0; k < K; ++k) {
            const real av = a[k];
            const real* b = B + static_cast<std::size_t>(k) * N;
            for (int j = 0; j < N; ++j) c[j] += av * b[j];
        }
    }
}

// C(M,N) += A(M,K) * B(N,K)^T
static void addmm_abT(real* C, const real* A, const real* B, int M, int N, int K) {
    for (int i = 0; i < M; ++i) {
        const real* a = A + static_cast<std::size_t>(i) * K;
        real* c = C + static_cast<std::size_t>(i) * N;
        for (int j = 0; j < N; ++j) {
            const real* b = B + static_cast<std::size_t>(j) * K;
            real acc = 0;
            for (int k = 0; k < K; ++k) acc += a[k] * b[k];
            c[j] += acc;
        }
    }
}

// C(K,N) += A(M,K)^T * B(M,N)
static void addmm_aTb(real* C, const real* A, const real* B, int M, int K, int N) {
    for (int m = 0; m < M; ++m) {
        const real* a = A + static_cast<std::size_t>(m) * K;
        const real* b = B + static_cast<std::size_t>(m) * N;
        for (int k = 0; k < K; ++k) {
            const real av = a[k];
            real* c = C + static_cast<std::size_t>(k) * N;
            for (int j = 0; j < N; ++j) c[j] += av * b[j];
        }
    }
}

// ---- op helpers -------------------------------------------------------------

static bool recording(std::initializer_list<const Tensor*> ins) {
    if (!Tape::active()) return false;
    for (const Tensor* t : ins) {
        if (t->node->requires_grad) return true;
    }
    return false;
}

static Tensor finish(std::shared_ptr<TensorNode> out, const char* op, bool rec) {
    check_finite(*out, op);
    out->requires_grad = rec;
    return Tensor(std::move(out));
}

// ---- matmul -----------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    const auto& as = a.shape();
    const auto& bs = b.shape();
    if (as.size() < 2 || bs.size() < 2) {
        throw std::invalid_argument("matmul: need >=2-D operands, got " + shape_str(as) + " x " +
                                    shape_str(bs));
    }
    const bool b_broadcast = bs.size() == 2 && as.size() > 2;
    if (!b_broadcast && as.size() != bs.size()) {
        throw std::invalid_argument("matmul: rank mismatch " + shape_str(as) + " x " + shape_str(bs));
    }
    const int M = as[as.size() - 2];
    const int K = as[as.size() - 1];
    const int Kb = bs[bs.size() - 2];
    const int N = bs[bs.size() - 1];
    if (K != Kb) throw std::invalid_argument("matmul: inner extents differ, " + shape_str(as) +
                                             " x " + shape_str(bs));
    std::int64_t batch = 1;
    std::vector<int> out_shape;
    for (std::size_t i = 0; i + 2 < as.size(); ++i) {
        if (!b_broadcast && bs[i] != as[i]) {
            throw std::invalid_argument("matmul: leading extents differ, " + shape_str(as) + " x " +
                                        shape_str(bs));
        }
        batch *= as[i];
        out_shape.push_back(as[i]);
    }
    out_shape.push_back(M);
    out_shape.push_back(N);

    auto out = make_node(out_shape);
    const std::size_t a_step = static_cast<std::size_t>(M) * K;
    const std::size_t b_step = b_broadcast ? 0 : static_cast<std::size_t>(K) * N;
    const std::size_t o_step = static_cast<std::size_t>(M) * N;
    for (std::int64_t bi = 0; bi < batch; ++bi) {
        addmm(out->data.data() + bi * o_step, a.data() + bi * a_step, b.data() + bi * b_step, M, K, N);
    }

    const bool rec = recording({&a, &b});
    if (rec) {
        auto an = a.node, bn = b.node, on = out;
        Tape::active()->record([an, bn, on, M, K, N, batch, a_step, b_step, o_step]() {
            const real* og = on->grad.data();
            if (an->requires_grad) {
                ensure_grad(*an);
                for (std::int64_t bi = 0; bi < batch; ++bi) {
                    addmm_abT(an->grad.data() + bi * a_step, og + bi * o_step,
                              bn->data.data() + bi * b_step, M, K, N);
                }
            }
            if (bn->requires_grad) {
                ensure_grad(*bn);
                for (std::int64_t bi = 0; bi < batch; ++bi) {
                    addmm_aTb(bn->grad.data() + bi * b_step, an->data.data() + bi * a_step,
                              og + bi * o_step, M, K, N);
                }
            }
        }, out);
    }
    return finish(out, "matmul", rec);
}

// ---- elementwise with suffix broadcast ---------------------------------------

static void suffix_check(const Tensor& a, const Tensor& b, const char* op) {
    const auto& as = a.shape();
    const auto& bs = b.shape();
    if (bs.size() > as.size()) {
        throw std::invalid_argument(std::string(op) + ": second operand rank exceeds first, " +
                                    shape_str(as) + " vs " + shape_str(bs));
    }
    for (std::size_t i = 0; i < bs.size(); ++i) {
        if (bs[bs.size() - 1 - i] != as[as.size() - 1 - i]) {
            throw std::invalid_argument(std::string(op) + ": shape " + shape_str(bs) +
                                        " is not a suffix of " + shape_str(as));
        }
    }
}

template <typename Fwd, typename BwdA, typename BwdB>
static Tensor ew_binary(const Tensor& a, const Tensor& b, const char* op, Fwd fwd, BwdA bwd_a,
                        BwdB bwd_b) {
    suffix_check(a, b, op);
    const std::size_t n = static_cast<std::size_t>(a.numel());
    const std::size_t m = static_cast<std::size_t>(b.numel());
    auto out = make_node(a.shape());
    const real* ap = a.data();
    const real* bp = b.data();
    for (std::size_t i = 0; i < n; ++i) out->data[i] = fwd(ap[i], bp[i % m]);

    const bool rec = recording({&a, &b});
    if (rec) {
        auto an = a.node, bn = b.node, on = out;
        Tape::active()->record([an, bn, on, n, m, bwd_a, bwd_b]() {
            const real* og = on->grad.data();
            const real* ap = an->data.data();
            const real* bp = bn->data.data();
            if (an->requires_grad) {
                ensure_grad(*an);
                real* ag = an->grad.data();
                for (std::size_t i = 0; i < n; ++i) ag[i] += bwd_a(og[i], ap[i], bp[i % m]);
            }
            if (bn->requires_grad) {
                ensure_grad(*bn);
                real* bg = bn->grad.data();
                for (std::size_t i = 0; i < n; ++i) bg[i % m] += bwd_b(og[i], ap[i], bp[i % m]);
            }
        }, out);
    }
    return finish(out, op, rec);
}

Tensor add(const Tensor& a, const Tensor& b) {
    return ew_binary(a, b, "add",
                     [](real x, real y) { return x + y; },
                     [](real g, real, real) { return g; },
                     [](real g, real, real) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return ew_binary(a, b, "sub",
                     [](real x, real y) { return x - y; },
                     [](real g, real, real) { return g; },
                     [](real g, real, real) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return ew_binary(a, b, "mul",
                     [](real x, real y) { return x * y; },
                     [](real g, real, real y) { return g * y; },
                     [](real g, real x, real) { return g * x; });
}

Tensor scale(const Tensor& a, real c) {
    const std::size_t n = static_cast<std::size_t>(a.numel());
    auto out = make_node(a.shape());
    const real* ap = a.data();
    for (std::size_t i = 0; i < n; ++i) out->data[i] = ap[i] * c;
    const bool rec = recording({&a});
    if (rec) {
        auto an = a.node, on = out;
        Tape::active()->record([an, on, n, c]() {
            if (!an->requires_grad) return;
            ensure_grad(*an);
            const real* og = on->grad.data();
            real* ag = an->grad.data();
            for (std::size_t i = 0; i < n; ++i) ag[i] += og[i] * c;
        }, out);
    }
    return finish(out, "scale", rec);
}

// ---- gelu (tanh form) --------------------------------------------------------

Tensor gelu(const Tensor& a) {
    static constexpr real kRoot2OverPi = real(0.7978845608028653558798921198687637);
    static constexpr real kCubic = real(0.044715);
    const std::size_t n = static_cast<std::size_t>(a.numel());
    auto out = make_node(a.shape());
    const real* ap = a.data();
    for (std::size_t i = 0; i < n; ++i) {
        const real x = ap[i];
        const real t = std::tanh(kRoot2OverPi * (x + kCubic * x * x * x));
        out->data[i] = real(0.5) * x * (real(1) + t);
    }
    const bool rec = recording({&a});
    if (rec) {
        auto an = a.node, on = out;
        Tape::active()->record([an, on, n]() {
            if (!an->requires_grad) return;
            ensure_grad(*an);
            const real* og = on->grad.data();
            const real* ap = an->data.data();
            real* ag = an->grad.data();
            for (std::size_t i = 0; i < n; ++i) {
                const real x = ap[i];
                const real t = std::tanh(kRoot2OverPi * (x + kCubic * x * x * x));
                const real du = kRoot2OverPi * (real(1) + real(3) * kCubic * x * x);
                const real d = real(0.5) * (real(1) + t) + real(0.5) * x * (real(1) - t * t) * du;
                ag[i] += og[i] * d;
            }
        }, out);
    }
    return finish(out, "gelu", rec);
}

// ---- axis helpers ------------------------------------------------------------

struct AxisSplit {
    std::int64_t outer, len, inner;
};

static AxisSplit split_axis(const std::vector<int>& shape, int axis, const char* op) {
    if (axis < 0) axis += static_cast<int>(shape.size());
    if (axis < 0 || axis >= static_cast<int>(shape.size())) {
        throw std::invalid_argument(std::string(op) + ": axis out of range for " + shape_str(shape));
    }
    AxisSplit s{1, shape[static_cast<std::size_t>(axis)], 1};
    for (int i = 0; i < axis; ++i) s.outer *= shape[static_cast<std::size_t>(i)];
    for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

static int norm_axis(const std::vector<int>& shape, int axis) {
    return axis < 0 ? axis + static_cast<int>(shape.size()) : axis;
}

// ---- softmax ------------------------------------------------------------------

Tensor softmax(const Tensor& a, int axis) {
    const AxisSplit s = split_axis(a.shape(), axis, "softmax");
    auto out = make_node(a.shape());
    const real* ap = a.data();
    real* op = out->data.data();
    for (std::int64_t o = 0; o < s.outer; ++o) {
        for (std::int64_t in = 0; in < s.inner; ++in) {
            const std::size_t base = static_cast<std::size_t>(o * s.len * s.inner + in);
            real mx = ap[base];
            for (std::int64_t k = 1; k < s.len; ++k) {
                mx = std::max(mx, ap[base + static_cast<std::size_t>(k * s.inner)]);
            }
            real sum = 0;
            for (std::int64_t k = 0; k < s.len; ++k) {
                const std::size_t idx = base + static_cast<std::size_t>(k * s.inner);
                const real e = std::exp(ap[idx] - mx);
                op[idx] = e;
                sum += e;
            }
            const real inv = real(1) / sum;
            for (std::int64_t k = 0; k < s.len; ++k) op[base + static_cast<std::size_t>(k * s.inner)] *= inv;
        }
    }
    const bool rec = recording({&a});
    if (rec) {
        auto an = a.node, on = out;
        Tape::active()->record([an, on, s]() {
            if (!an->requires_grad) return;
            ensure_grad(*an);
            const real* og = on->grad.data();
            const real* y = on->data.data();
            real* ag = an->grad.data();
            for (std::int64_t o = 0; o < s.outer; ++o) {
                for (std::int64_t in = 0; in < s.inner; ++in) {
                    const std::size_t base = static_cast<std::size_t>(o * s.len * s.inner + in);
                    real dot = 0;
                    for (std::int64_t k = 0; k < s.len; ++k) {
                        const std::size_t idx = base + static_cast<std::size_t>(k * s.inner);
                        dot += og[idx] * y[idx];
                    }
                    for (std::int64_t k = 0; k < s.len; ++k) {
                        const std::size_t idx = base + static_cast<std::size_t>(k * s.inner);
                        ag[idx] += y[idx] * (og[idx] - dot);
                    }
                }
            }
        }, out);
    }
    return finish(out, "softmax", rec);
}

// ---- layer_norm ----------------------------------------------------------------

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, real eps) {
    const auto& xs = x.shape();
    if (xs.empty()) throw std::invalid_argument("layer_norm: scalar input");
    const int D = xs.back();
    if (gain.numel() != D || bias.numel() != D) {
        throw std::invalid_argument("layer_norm: gain/bias extent must match last axis " +
                                    std::to_string(D));
    }
    const std::int64_t lanes = x.numel() / D;
    auto out = make_node(xs);
    std::vector<real> xhat(static_cast<std::size_t>(x.numel()));
    std::vector<real> inv_std(static_cast<std::size_t>(lanes));
    const real* xp = x.data();
    const real* gp = gain.data();
    const real* bp = bias.data();
    for (std::int64_t l = 0; l < lanes; ++l) {
        const real* row = xp + l * D;
        real mu = 0;
        for (int j = 0; j < D; ++j) mu += row[j];
        mu /= real(D);
        real var = 0;
        for (int j = 0; j < D; ++j) {
            const real d = row[j] - mu;
            var += d * d;
        }
        var /= real(D);
        const real inv = real(1) / std::sqrt(var + eps);
        inv_std[static_cast<std::size_t>(l)] = inv;
        real* xh = xhat.data() + l * D;
        real* orow = out->data.data() + l * D;
        for (int j = 0; j < D; ++j) {
            xh[j] = (row[j] - mu) * inv;
            orow[j] = xh[j] * gp[j] + bp[j];
        }
    }
    const bool rec = recording({&x, &gain, &bias});
    if (rec) {
        auto xn = x.node, gn = gain.node, bn = bias.node, on = out;
        auto xh = std::make_shared<std::vector<real>>(std::move(xhat));
        auto inv = std::make_shared<std::vector<real>>(std::move(inv_std));
        Tape::active()->record([xn, gn, bn, on, xh, inv, lanes, D]() {
            const real* og = on->grad.data();
            const real* gp = gn->data.data();
            if (xn->requires_grad) {
                ensure_grad(*xn);
                real* xg = xn->grad.data();
                for (std::int64_t l = 0; l < lanes; ++l) {
                    const real* dy = og + l * D;
                    const real* h = xh->data() + l * D;
                    const real is = (*inv)[static_cast<std::size_t>(l)];
                    real sum_dxh = 0, sum_dxh_h = 0;
                    for (int j = 0; j < D; ++j) {
                        const real dxh = dy[j] * gp[j];
                        sum_dxh += dxh;
                        sum_dxh_h += dxh * h[j];
                    }
                    real* xrow = xg + l * D;
                    const real scale = is / real(D);
                    for (int j = 0; j < D; ++j) {
                        const real dxh = dy[j] * gp[j];
                        xrow[j] += scale * (real(D) * dxh - sum_dxh - h[j] * sum_dxh_h);
                    }
                }
            }
            if (gn->requires_grad) {
                ensure_grad(*gn);
                real* gg = gn->grad.data();
                for (std::int64_t l = 0; l < lanes; ++l) {
                    const real* dy = og + l * D;
                    const real* h = xh->data() + l * D;
                    for (int j = 0; j < D; ++j) gg[j] += dy[j] * h[j];
                }
            }
            if (bn->requires_grad) {
                ensure_grad(*bn);
                real* bg = bn->grad.data();
                for (std::int64_t l = 0; l < lanes; ++l) {
                    const real* dy = og + l * D;
                    for (int j = 0; j < D; ++j) bg[j] += dy[j];
                }
            }
        }, out);
    }
    return finish(out, "layer_norm", rec);
}

// ---- reductions -----------------------------------------------------------------

Tensor mean(const Tensor& a, int axis) {
    const AxisSplit s = split_axis(a.shape(), axis, "mean");
    const int ax = norm_axis(a.shape(), axis);
    std::vector<int> out_shape = a.shape();
    out_shape.erase(out_shape.begin() + ax);
    if (out_shape.empty()) out_shape = {1};
    auto out = make_node(out_shape);
    const real* ap = a.data();
    const real invl = real(1) / real(s.len);
    for (std::int64_t o = 0; o < s.outer; ++o) {
        for (std::int64_t in = 0; in < s.inner; ++in) {
            real acc = 0;
            for (std::int64_t k = 0; k < s.len; ++k) {
                acc += ap[static_cast<std::size_t>((o * s.len + k) * s.inner + in)];
            }
            out->data[static_cast<std::size_t>(o * s.inner + in)] = acc * invl;
        }
    }
    const bool rec = recording({&a});
    if (rec) {
        auto an = a.node, on = out;
        Tape::active()->record([an, on, s, invl]() {
            if (!an->requires_grad) return;
            ensure_grad(*an);
            const real* og = on->grad.data();
            real* ag = an->grad.data();
            for (std::int64_t o = 0; o < s.outer; ++o) {
                for (std::int64_t in = 0; in < s.inner; ++in) {
                    const real g = og[static_cast<std::size_t>(o * s.inner + in)] * invl;
                    for (std::int64_t k = 0; k < s.len; ++k) {
                        ag[static_cast<std::size_t>((o * s.len + k) * s.inner + in)] += g;
                    }
                }
            }
        }, out);
    }
    return finish(out, "mean", rec);
}

Tensor sum(const Tensor& a) {
    auto out = make_node({1});
    real acc = 0;
    const real* ap = a.data();
    const std::size_t n = static_cast<std::size_t>(a.numel());
    for (std::size_t i = 0; i < n; ++i) acc += ap[i];
    out->data[0] = acc;
    const bool rec = recording({&a});
    if (rec) {
        auto an = a.node, on = out;
        Tape::active()->record([an, on, n]() {
            if (!an->requires_grad) return;
            ensure_grad(*an);
            const real g = on->grad[0];
            real* ag = an->grad.data();
            for (std::size_t i = 0; i < n; ++i) ag[i] += g;
        }, out);
    }
    return finish(out, "sum", rec);
}

Tensor sqrt(const Tensor& a) {
    const std::size_t n = static_cast<std::size_t>(a.numel());
    auto out = make_node(a.shape());
    const real* ap = a.data();
    for (std::size_t i = 0; i < n; ++i) out->data[i] = std::sqrt(ap[i]);
    const bool rec = recording({&a});
    if (rec) {
        auto an = a.node, on = out;
        Tape::active()->record([an, on, n]() {
            if (!an->requires_grad) return;
            ensure_grad(*an);
            const real* og = on->grad.data();
            const real* y = on->data.data();
            real* ag = an->grad.data();
            for (std::size_t i = 0; i < n; ++i) ag[i] += og[i] * real(0.5) / y[i];
        }, out);
    }
    return finish(out, "sqrt", rec);
}

Tensor square(const Tensor& a) {
    const std::size_t n = static_cast<std::size_t>(a.numel());
    auto out = make_node(a.shape());
    const real* ap = a.data();
    for (std::size_t i = 0; i < n; ++i) out->data[i] = ap[i] * ap[i];
    const bool rec = recording({&a});
    if (rec) {
        auto an = a.node, on = out;
        Tape::active()->record([an, on, n]() {
            if (!an->requires_grad) return;
            ensure_grad(*an);
            const real* og = on->grad.data();
            const real* ap = an->data.data();
            real* ag = an->grad.data();
            for (std::size_t i = 0; i < n; ++i) ag[i] += og[i] * real(2) * ap[i];
        }, out);
    }
    return finish(out, "square", rec);
}

Tensor l2_norm(const Tensor& a, int axis) {
    const AxisSplit s = split_axis(a.shape(), axis, "l2_norm");
    const int ax = norm_axis(a.shape(), axis);
    std::vector<int> out_shape = a.shape();
    out_shape.erase(out_shape.begin() + ax);
    if (out_shape.empty()) out_shape = {1};
    auto out = make_node(out_shape);
    const real* ap = a.data();
    for (std::int64_t o = 0; o < s.outer; ++o) {
        for (std::int64_t in = 0; in < s.inner; ++in) {
            real acc = 0;
            for (std::int64_t k = 0; k < s.len; ++k) {
                const real v = ap[static_cast<std::size_t>((o * s.len + k) * s.inner + in)];
                acc += v * v;
            }
            out->data[static_cast<std::size_t>(o * s.inner + in)] = std::sqrt(acc);
        }
    }
    const bool rec = recording({&a});
    if (rec) {
        auto an = a.node, on = out;
        Tape::active()->record([an, on, s]() {
            if (!an->requires_grad) return;
            ensure_grad(*an);
            const real* og = on->grad.data();
            const real* y = on->data.data();
            const real* ap = an->data.data();
            real* ag = an->grad.data();
            for (std::int64_t o = 0; o < s.outer; ++o) {
                for (std::int64_t in = 0; in < s.inner; ++in) {
                    const std::size_t oi = static_cast<std::size_t>(o * s.inner + in);
                    if (y[oi] == real(0)) continue;  // subgradient 0 at the kink
                    const real g = og[oi] / y[oi];
                    for (std::int64_t k = 0; k < s.len; ++k) {
                        const std::size_t idx = static_cast<std::size_t>((o * s.len + k) * s.inner + in);
                        ag[idx] += g * ap[idx];
                    }
                }
            }
        }, out);
    }
    return finish(out, "l2_norm", rec);
}

Tensor detach(const Tensor& a) { return a.detach(); }

// ---- shape plumbing ---------------------------------------------------------------

Tensor reshape(const Tensor& a, std::vector<int> shape) {
    if (shape_numel(shape) != a.numel()) {
        throw std::invalid_argument("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape) +
                                    " changes element count");
    }
    auto out = std::make_shared<TensorNode>();
    out->shape = std::move(shape);
    out->data = a.node->data;
    const bool rec = recording({&a});
    if (rec) {
        auto an = a.node, on = out;
        Tape::active()->record([an, on]() {
            if (!an->requires_grad) return;
            ensure_grad(*an);
            const real* og = on->grad.data();
            real* ag = an->grad.data();
            for (std::size_t i = 0; i < an->data.size(); ++i) ag[i] += og[i];
        }, out);
    }
    return finish(out, "reshape", rec);
}

static std::vector<std::int64_t> row_major_strides(const std::vector<int>& shape) {
    std::vector<std::int64_t> st(shape.size());
    std::int64_t acc = 1;
    for (int i = static_cast<int>(shape.size()) - 1; i >= 0; --i) {
        st[static_cast<std::size_t>(i)] = acc;
        acc *= shape[static_cast<std::size_t>(i)];
    }
    return st;
}

Tensor permute(const Tensor& a, const std::vector<int>& axes) {
    const auto& as = a.shape();
    const std::size_t nd = as.size();
    if (axes.size() != nd) throw std::invalid_argument("permute: axes rank mismatch");
    std::vector<bool> seen(nd, false);
    std::vector<int> out_shape(nd);
    for (std::size_t i = 0; i < nd; ++i) {
        const int ax = axes[i];
        if (ax < 0 || ax >= static_cast<int>(nd) || seen[static_cast<std::size_t>(ax)]) {
            throw std::invalid_argument("permute: invalid axes");
        }
        seen[static_cast<std::size_t>(ax)] = true;
        out_shape[i] = as[static_cast<std::size_t>(ax)];
    }
    const auto in_strides = row_major_strides(as);
    // For each output linear index, the matching input linear index.
    const std::int64_t n = a.numel();
    std::vector<std::int64_t> src(static_cast<std::size_t>(n));
    std::vector<std::int64_t> idx(nd, 0);
    for (std::int64_t lin = 0; lin < n; ++lin) {
        std::int64_t in_lin = 0;
        for (std::size_t d = 0; d < nd; ++d) {
            in_lin += idx[d] * in_strides[static_cast<std::size_t>(axes[d])];
        }
        src[static_cast<std::size_t>(lin)] = in_lin;
        for (int d = static_cast<int>(nd) - 1; d >= 0; --d) {
            if (++idx[static_cast<std::size_t>(d)] < out_shape[static_cast<std::size_t>(d)]) break;
            idx[static_cast<std::size_t>(d)] = 0;
        }
    }
    auto out = make_node(out_shape);
    const real* ap = a.data();
    for (std::int64_t i = 0; i < n; ++i) out->data[static_cast<std::size_t>(i)] = ap[src[static_cast<std::size_t>(i)]];
    const bool rec = recording({&a});
    if (rec) {
        auto an = a.node, on = out;
        auto map = std::make_shared<std::vector<std::int64_t>>(std::move(src));
        Tape::active()->record([an, on, map, n]() {
            if (!an->requires_grad) return;
            ensure_grad(*an);
            const real* og = on->grad.data();
            real* ag = an->grad.data();
            for (std::int64_t i = 0; i < n; ++i) ag[(*map)[static_cast<std::size_t>(i)]] += og[static_cast<std::size_t>(i)];
        }, out);
    }
    return finish(out, "permute", rec);
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    const auto& s0 = parts[0].shape();
    const int ax = norm_axis(s0, axis);
    if (ax < 0 || ax >= static_cast<int>(s0.size())) throw std::invalid_argument("concat: axis out of range");
    int total = 0;
    for (const Tensor& p : parts) {
        const auto& ps = p.shape();
        if (ps.size() != s0.size()) throw std::invalid_argument("concat: rank mismatch");
        for (std::size_t i = 0; i < ps.size(); ++i) {
            if (static_cast<int>(i) != ax && ps[i] != s0[i]) {
                throw std::invalid_argument("concat: extents differ off-axis: " + shape_str(s0) +
                                            " vs " + shape_str(ps));
            }
        }
        total += ps[static_cast<std::size_t>(ax)];
    }
    std::vector<int> out_shape = s0;
    out_shape[static_cast<std::size_t>(ax)] = total;
    auto out = make_node(out_shape);
    const AxisSplit so = split_axis(out_shape, ax, "concat");

    std::int64_t offset = 0;  // running offset along the axis
    std::vector<std::int64_t> starts;
    for (const Tensor& p : parts) {
        starts.push_back(offset);
        const std::int64_t plen = p.shape()[static_cast<std::size_t>(ax)];
        const real* pp = p.data();
        for (std::int64_t o = 0; o < so.outer; ++o) {
            real* dst = out->data.data() + (o * so.len + offset) * so.inner;
            const real* srcp = pp + o * plen * so.inner;
            std::copy(srcp, srcp + plen * so.inner, dst);
        }
        offset += plen;
    }
    bool any_rg = false;
    for (const Tensor& p : parts) any_rg = any_rg || p.node->requires_grad;
    const bool rec = Tape::active() && any_rg;
    if (rec) {
        std::vector<std::shared_ptr<TensorNode>> ins;
        for (const Tensor& p : parts) ins.push_back(p.node);
        auto on = out;
        Tape::active()->record([ins, on, so, starts]() {
            const real* og = on->grad.data();
            for (std::size_t pi = 0; pi < ins.size(); ++pi) {
                auto& in = ins[pi];
                if (!in->requires_grad) continue;
                ensure_grad(*in);
                const std::int64_t plen = in->data.size() / (so.outer * so.inner);
                for (std::int64_t o = 0; o < so.outer; ++o) {
                    const real* srcg = og + (o * so.len + starts[pi]) * so.inner;
                    real* dst = in->grad.data() + o * plen * so.inner;
                    for (std::int64_t i = 0; i < plen * so.inner; ++i) dst[i] += srcg[i];
                }
            }
        }, out);
    }
    return finish(out, "concat", rec);
}

Tensor narrow(const Tensor& a, int axis, int start, int len) {
    const auto& as = a.shape();
    const int ax = norm_axis(as, axis);
    const AxisSplit s = split_axis(as, ax, "narrow");
    if (start < 0 || len <= 0 || start + len > s.len) {
        throw std::invalid_argument("narrow: window [" + std::to_string(start) + "," +
                                    std::to_string(start + len) + ") exceeds extent " +
                                    std::to_string(s.len));
    }
    std::vector<int> out_shape = as;
    out_shape[static_cast<std::size_t>(ax)] = len;
    auto out = make_node(out_shape);
    const real* ap = a.data();
    for (std::int64_t o = 0; o < s.outer; ++o) {
        const real* srcp = ap + (o * s.len + start) * s.inner;
        real* dst = out->data.data() + o * len * s.inner;
        std::copy(srcp, srcp + static_cast<std::int64_t>(len) * s.inner, dst);
    }
    const bool rec = recording({&a});
    if (rec) {
        auto an = a.node, on = out;
        Tape::active()->record([an, on, s, start, len]() {
            if (!an->requires_grad) return;
            ensure_grad(*an);
            const real* og = on->grad.data();
            real* ag = an->grad.data();
            for (std::int64_t o = 0; o < s.outer; ++o) {
                const real* srcg = og + o * len * s.inner;
                real* dst = ag + (o * s.len + start) * s.inner;
                for (std::int64_t i = 0; i < static_cast<std::int64_t>(len) * s.inner; ++i) dst[i] += srcg[i];
            }
        }, out);
    }
    return finish(out, "narrow", rec);
}

Tensor gather_rows(const Tensor& a, const std::vector<int>& rows) {
    const auto& as = a.shape();
    if (as.size() != 2) throw std::invalid_argument("gather_rows: expected 2-D input, got " + shape_str(as));
    const int R = as[0], D = as[1];
    for (int r : rows) {
        if (r < 0 || r >= R) throw std::invalid_argument("gather_rows: row " + std::to_string(r) +
                                                          " out of range [0," + std::to_string(R) + ")");
    }
    auto out = make_node({static_cast<int>(rows.size()), D});
    const real* ap = a.data();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::copy(ap + static_cast<std::size_t>(rows[i]) * D, ap + static_cast<std::size_t>(rows[i] + 1) * D,
                  out->data.data() + i * D);
    }
    const bool rec = recording({&a});
    if (rec) {
        auto an = a.node, on = out;
        auto idx = std::make_shared<std::vector<int>>(rows);
        Tape::active()->record([an, on, idx, D]() {
            if (!an->requires_grad) return;
            ensure_grad(*an);
            const real* og = on->grad.data();
            real* ag = an->grad.data();
            for (std::size_t i = 0; i < idx->size(); ++i) {
                real* dst = ag + static_cast<std::size_t>((*idx)[i]) * D;
                const real* srcg = og + i * D;
                for (int j = 0; j < D; ++j) dst[j] += srcg[j];
            }
        }, out);
    }
    return finish(out, "gather_rows", rec);
}

Tensor expand_batch(const Tensor& a, int batch) {
    if (batch <= 0) throw std::invalid_argument("expand_batch: batch must be positive");
    std::vector<int> out_shape;
    out_shape.push_back(batch);
    for (int d : a.shape()) out_shape.push_back(d);
    auto out = make_node(out_shape);
    const std::size_t n = static_cast<std::size_t>(a.numel());
    for (int b = 0; b < batch; ++b) {
        std::copy(a.data(), a.data() + n, out->data.data() + static_cast<std::size_t>(b) * n);
    }
    const bool rec = recording({&a});
    if (rec) {
        auto an = a.node, on = out;
        Tape::active()->record([an, on, batch, n]() {
            if (!an->requires_grad) return;
            ensure_grad(*an);
            const real* og = on->grad.data();
            real* ag = an->grad.data();
            for (int b = 0; b < batch; ++b) {
                const real* srcg = og + static_cast<std::size_t>(b) * n;
                for (std::size_t i = 0; i < n; ++i) ag[i] += srcg[i];
            }
        }, out);
    }
    return finish(out, "expand_batch", rec);
}

}  // namespace njepa
