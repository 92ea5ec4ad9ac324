#pragma once

// The three loss terms and their weighted combination. Predictions and
// targets arrive as per-block (tokens x dim) tensors; targets must be
// detached by the caller (the teacher branch never records gradients).

#include <vector>

#include "njepa/tensor.hpp"

namespace njepa {

struct LossWeights {
    real lambda1 = real(0.1);  // noise-predictor-to-teacher term
    real lambda2 = real(0.1);  // context-to-noise term
    void validate() const;     // both >= 0
};

struct LossReport {
    double l_ct = 0, l_nt = 0, l_cn = 0, total = 0, wall_ms = 0;
};

// Per token j: d_j = ||pred_j - target_j||_2, contribution 0.5*d_j^2 when
// d_j < 1 else d_j - 0.5; returns the mean over tokens. The elementwise
// variant applies the same branch per element (library convention) and
// averages over all elements; it exists for sensitivity checks only.
Tensor smooth_l1_block(const Tensor& pred, const Tensor& target, bool elementwise = false);

// (1/L) * sum over blocks of smooth_l1_block.
Tensor loss_ct(const std::vector<Tensor>& predictions_c, const std::vector<Tensor>& targets,
               bool elementwise = false);
Tensor loss_nt(const std::vector<Tensor>& predictions_n, const std::vector<Tensor>& targets,
               bool elementwise = false);

// (1/L) * sum over blocks of sum over tokens of squared L2 distance between
// the two predictors' outputs; gradients flow through both branches.
Tensor loss_cn(const std::vector<Tensor>& predictions_n, const std::vector<Tensor>& predictions_c);

// l_ct + lambda1 * l_nt + lambda2 * l_cn
Tensor total_loss(const Tensor& l_ct, const Tensor& l_nt, const Tensor& l_cn,
                  const LossWeights& weights);

}  // namespace njepa
