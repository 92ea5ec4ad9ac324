#pragma once

// Multi-block masking: L target blocks plus one context block with the
// target union removed, sampled independently per image.

#include <string>
#include <vector>

#include "njepa/rng.hpp"

namespace njepa {

struct BlockSpec {
    int top = 0, left = 0, height = 0, width = 0;
    std::vector<int> indices(int grid_w) const;  // row-major patch ids, sorted
};

struct MaskLayout {
    std::vector<BlockSpec> target_blocks;
    std::vector<int> context_indices;  // sorted, disjoint from every target block
    int image_id = 0;
};

struct MaskConfig {
    int n_targets = 4;
    double target_scale_min = 0.15, target_scale_max = 0.2;
    double target_aspect_min = 0.75, target_aspect_max = 1.5;
    double context_scale_min = 0.85, context_scale_max = 1.0;
    int max_context_resamples = 16;
};

// floor(x + 0.5): the one rounding rule used for block sides.
int round_half_up(double x);

BlockSpec sample_target_block(Rng& rng, int grid_h, int grid_w,
                              double scale_min, double scale_max,
                              double aspect_min, double aspect_max);
BlockSpec sample_context_block(Rng& rng, int grid_h, int grid_w,
                               double scale_min, double scale_max);
MaskLayout build_layout(Rng& rng, int grid_h, int grid_w, const MaskConfig& cfg,
                        int image_id = 0);

// One character per patch: '1'..'L' first covering target, 'c' context,
// '.' dropped (inside the context block but removed by a target).
std::string render_layout(const MaskLayout& layout, int grid_h, int grid_w);

}  // namespace njepa
