#include "njepa/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace njepa {

void LossWeights::validate() const {
    if (lambda1 < 0 || lambda2 < 0) throw std::invalid_argument("loss weights must be >= 0");
}

// Fused op: the per-token branch on the vector norm is not expressible with
// the generic tensor ops, so it registers its own backward rule.
Tensor smooth_l1_block(const Tensor& pred, const Tensor& target, bool elementwise) {
    if (pred.shape() != target.shape()) {
        throw std::invalid_argument("smooth_l1_block: shape mismatch " + shape_str(pred.shape()) +
                                    " vs " + shape_str(target.shape()));
    }
    if (pred.ndim() != 2) throw std::invalid_argument("smooth_l1_block: expected (tokens, dim)");
    const int T = pred.dim(0), D = pred.dim(1);
    const real* p = pred.data();
    const real* t = target.data();
    Tensor out = Tensor::zeros({1});
    real acc = 0;
    if (elementwise) {
        for (std::int64_t i = 0; i < pred.numel(); ++i) {
            const real e = std::abs(p[i] - t[i]);
            acc += e < real(1) ? real(0.5) * e * e : e - real(0.5);
        }
        acc /= real(T) * real(D);
    } else {
        for (int j = 0; j < T; ++j) {
            real sq = 0;
            for (int k = 0; k < D; ++k) {
                const real d = p[j * D + k] - t[j * D + k];
                sq += d * d;
            }
            const real d = std::sqrt(sq);
            acc += d < real(1) ? real(0.5) * d * d : d - real(0.5);
        }
        acc /= real(T);
    }
    out.values()[0] = acc;
    if (!std::isfinite(acc)) throw std::runtime_error("smooth_l1_block: non-finite loss");

    Tape* tape = Tape::active();
    const bool rec = tape && (pred.requires_grad() || target.requires_grad());
    if (rec) {
        auto pn = pred.node, tn = target.node, on = out.node;
        tape->record([pn, tn, on, T, D, elementwise]() {
            const real g = on->grad[0];
            const real* p = pn->data.data();
            const real* t = tn->data.data();
            auto write = [&](TensorNode& n, real sign) {
                ensure_grad(n);
                real* dst = n.grad.data();
                if (elementwise) {
                    const real inv = real(1) / (real(T) * real(D));
                    for (int i = 0; i < T * D; ++i) {
                        const real e = p[i] - t[i];
                        const real de = std::abs(e) < real(1) ? e : (e > 0 ? real(1) : real(-1));
                        dst[i] += sign * g * de * inv;
                    }
                    return;
                }
                const real inv = real(1) / real(T);
                for (int j = 0; j < T; ++j) {
                    real sq = 0;
                    for (int k = 0; k < D; ++k) {
                        const real d = p[j * D + k] - t[j * D + k];
                        sq += d * d;
                    }
                    const real d = std::sqrt(sq);
                    // d < 1: gradient is the difference itself; d >= 1: unit
                    // direction. Both give |grad per token| <= 1.
                    const real f = d < real(1) ? real(1) : real(1) / d;
                    for (int k = 0; k < D; ++k) {
                        dst[j * D + k] += sign * g * f * (p[j * D + k] - t[j * D + k]) * inv;
                    }
                }
            };
            if (pn->requires_grad) write(*pn, real(1));
            if (tn->requires_grad) write(*tn, real(-1));
        }, out.node);
    }
    out.node->requires_grad = rec;
    return out;
}

static Tensor block_average(const std::vector<Tensor>& preds, const std::vector<Tensor>& targets,
                            bool elementwise, const char* who) {
    if (preds.empty()) throw std::invalid_argument(std::string(who) + ": no blocks");
    if (preds.size() != targets.size()) {
        throw std::invalid_argument(std::string(who) + ": block count mismatch");
    }
    Tensor acc = smooth_l1_block(preds[0], targets[0], elementwise);
    for (std::size_t i = 1; i < preds.size(); ++i) {
        acc = add(acc, smooth_l1_block(preds[i], targets[i], elementwise));
    }
    return scale(acc, real(1) / real(preds.size()));
}

Tensor loss_ct(const std::vector<Tensor>& predictions_c, const std::vector<Tensor>& targets,
               bool elementwise) {
    return block_average(predictions_c, targets, elementwise, "loss_ct");
}

Tensor loss_nt(const std::vector<Tensor>& predictions_n, const std::vector<Tensor>& targets,
               bool elementwise) {
    return block_average(predictions_n, targets, elementwise, "loss_nt");
}

Tensor loss_cn(const std::vector<Tensor>& predictions_n, const std::vector<Tensor>& predictions_c) {
    if (predictions_n.empty()) throw std::invalid_argument("loss_cn: no blocks");
    if (predictions_n.size() != predictions_c.size()) {
        throw std::invalid_argument("loss_cn: block count mismatch");
    }
    Tensor acc;
    for (std::size_t i = 0; i < predictions_n.size(); ++i) {
        // Token-sum of squared distances within the block; only the block
        // average applies a 1/L.
        Tensor term = sum(square(sub(predictions_n[i], predictions_c[i])));
        acc = i == 0 ? term : add(acc, term);
    }
    return scale(acc, real(1) / real(predictions_n.size()));
}

Tensor total_loss(const Tensor& l_ct, const Tensor& l_nt, const Tensor& l_cn,
                  const LossWeights& weights) {
    weights.validate();
    return add(l_ct, add(scale(l_nt, weights.lambda1), scale(l_cn, weights.lambda2)));
}

}  // namespace njepa
