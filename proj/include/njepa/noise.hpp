#pragma once

// EDM-style noise for masked-token position embeddings: log-normal sigma
// draws, per-block Gaussian noise, and the additive application step.

#include <string>

#include "njepa/rng.hpp"
#include "njepa/tensor.hpp"

namespace njepa {

enum class NoiseMode { multi_level, single_level, fixed_sigma, off };

NoiseMode noise_mode_from_string(const std::string& s);
std::string to_string(NoiseMode m);

struct NoiseParams {
    double p_mean = -1.2;
    double p_std = 1.2;
    double sigma_data = 0.5;
    NoiseMode mode = NoiseMode::multi_level;
    void validate() const;  // p_std > 0, sigma_data > 0
};

struct NoiseDraw {
    double sigma = 0.0;
    Tensor n;  // (rows, dim), no gradient
};

// multi_level / single_level: ln(sigma) ~ N(p_mean, p_std^2).
// fixed_sigma: sigma_data, no rng consumed. off: 0, no rng consumed.
double sample_sigma(Rng& rng, const NoiseParams& params);

// Entries i.i.d. N(0, sigma^2); sigma = 0 yields exact zeros without
// consuming the rng.
NoiseDraw draw_block_noise(Rng& rng, double sigma, int rows, int dim);

// Returns psi + n, leaving psi untouched. The draw's stored noise is
// canonicalized to the representable difference (psi_noised - psi), so
// subtracting the inputs back recovers it bit-exactly.
Tensor apply_noise(const Tensor& psi_block, NoiseDraw& draw);

}  // namespace njepa
