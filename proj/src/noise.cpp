#include "njepa/noise.hpp"

#include <cmath>
#include <stdexcept>

namespace njepa {

NoiseMode noise_mode_from_string(const std::string& s) {
    if (s == "multi_level") return NoiseMode::multi_level;
    if (s == "single_level") return NoiseMode::single_level;
    if (s == "fixed_sigma") return NoiseMode::fixed_sigma;
    if (s == "off") return NoiseMode::off;
    throw std::invalid_argument("unknown noise mode: " + s);
}

std::string to_string(NoiseMode m) {
    switch (m) {
        case NoiseMode::multi_level: return "multi_level";
        case NoiseMode::single_level: return "single_level";
        case NoiseMode::fixed_sigma: return "fixed_sigma";
        case NoiseMode::off: return "off";
    }
    return "?";
}

void NoiseParams::validate() const {
    if (p_std <= 0) throw std::invalid_argument("noise: p_std must be > 0");
    if (sigma_data <= 0) throw std::invalid_argument("noise: sigma_data must be > 0");
}

double sample_sigma(Rng& rng, const NoiseParams& params) {
    params.validate();
    switch (params.mode) {
        case NoiseMode::multi_level:
        case NoiseMode::single_level:
            return std::exp(rng.normal(params.p_mean, params.p_std));
        case NoiseMode::fixed_sigma:
            return params.sigma_data;
        case NoiseMode::off:
            return 0.0;
    }
    return 0.0;
}

NoiseDraw draw_block_noise(Rng& rng, double sigma, int rows, int dim) {
    if (rows < 1 || dim < 1) throw std::invalid_argument("draw_block_noise: rows and dim must be >= 1");
    if (sigma < 0) throw std::invalid_argument("draw_block_noise: negative sigma");
    NoiseDraw d;
    d.sigma = sigma;
    d.n = Tensor::zeros({rows, dim});
    if (sigma > 0) {
        real* p = d.n.data();
        const std::int64_t count = d.n.numel();
        for (std::int64_t i = 0; i < count; ++i) p[i] = static_cast<real>(rng.normal(0.0, sigma));
    }
    return d;
}

Tensor apply_noise(const Tensor& psi_block, NoiseDraw& draw) {
    if (psi_block.shape() != draw.n.shape()) {
        throw std::invalid_argument("apply_noise: psi shape " + shape_str(psi_block.shape()) +
                                    " vs noise shape " + shape_str(draw.n.shape()));
    }
    Tensor out = add(psi_block, draw.n);
    // Snap the stored noise to the difference that floating point actually
    // realized, so psi_noised - psi == draw.n holds bit-for-bit.
    const real* psi = psi_block.data();
    const real* o = out.data();
    real* n = draw.n.data();
    const std::int64_t count = out.numel();
    for (std::int64_t i = 0; i < count; ++i) n[i] = o[i] - psi[i];
    return out;
}

}  // namespace njepa
