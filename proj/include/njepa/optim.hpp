#pragma once

// AdamW with decoupled weight decay, plus the EMA teacher update.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "njepa/tensor.hpp"

namespace njepa {

struct AdamW {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::int64_t step_count = 0;
    std::vector<std::vector<real>> m, v;  // parallel to the param list

    void init(const std::vector<std::pair<std::string, Tensor>>& params);
    // One update over all params. Parameters without a populated gradient
    // are skipped entirely; non-finite gradients abort with a diagnostic.
    void step(std::vector<std::pair<std::string, Tensor>>& params, double lr, double wd);
};

void adamw_step(AdamW& state, std::vector<std::pair<std::string, Tensor>>& params,
                double lr, double wd);

// teacher <- q * teacher + (1 - q) * student, elementwise over matching
// parameter lists; reads student values only (never gradients).
void ema_update(std::vector<std::pair<std::string, Tensor>>& teacher_params,
                const std::vector<std::pair<std::string, Tensor>>& student_params, double q);

}  // namespace njepa
