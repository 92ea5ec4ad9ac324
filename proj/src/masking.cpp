#include "njepa/masking.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace njepa {

std::vector<int> BlockSpec::indices(int grid_w) const {
    std::vector<int> ids;
    ids.reserve(static_cast<std::size_t>(height) * width);
    for (int r = top; r < top + height; ++r) {
        for (int c = left; c < left + width; ++c) ids.push_back(r * grid_w + c);
    }
    return ids;
}

int round_half_up(double x) { return static_cast<int>(std::floor(x + 0.5)); }

static int clamp_side(int v, int hi) { return std::max(1, std::min(v, hi)); }

static BlockSpec place_block(Rng& rng, int grid_h, int grid_w, double s, double r) {
    const double n = static_cast<double>(grid_h) * grid_w;
    BlockSpec b;
    b.height = clamp_side(round_half_up(std::sqrt(s * n * r)), grid_h);
    b.width = clamp_side(round_half_up(std::sqrt(s * n / r)), grid_w);
    b.top = static_cast<int>(rng.uniform_int(0, grid_h - b.height));
    b.left = static_cast<int>(rng.uniform_int(0, grid_w - b.width));
    return b;
}

BlockSpec sample_target_block(Rng& rng, int grid_h, int grid_w,
                              double scale_min, double scale_max,
                              double aspect_min, double aspect_max) {
    if (grid_h * grid_w < 4) throw std::invalid_argument("sample_target_block: grid has < 4 patches");
    const double s = rng.uniform(scale_min, scale_max);
    const double r = rng.uniform(aspect_min, aspect_max);
    return place_block(rng, grid_h, grid_w, s, r);
}

BlockSpec sample_context_block(Rng& rng, int grid_h, int grid_w,
                               double scale_min, double scale_max) {
    if (grid_h * grid_w < 4) throw std::invalid_argument("sample_context_block: grid has < 4 patches");
    const double s = rng.uniform(scale_min, scale_max);
    return place_block(rng, grid_h, grid_w, s, 1.0);
}

MaskLayout build_layout(Rng& rng, int grid_h, int grid_w, const MaskConfig& cfg, int image_id) {
    MaskLayout layout;
    layout.image_id = image_id;
    std::set<int> target_union;
    for (int i = 0; i < cfg.n_targets; ++i) {
        BlockSpec b = sample_target_block(rng, grid_h, grid_w, cfg.target_scale_min,
                                          cfg.target_scale_max, cfg.target_aspect_min,
                                          cfg.target_aspect_max);
        for (int id : b.indices(grid_w)) target_union.insert(id);
        layout.target_blocks.push_back(b);
    }
    for (int attempt = 0; attempt < cfg.max_context_resamples; ++attempt) {
        BlockSpec ctx = sample_context_block(rng, grid_h, grid_w, cfg.context_scale_min,
                                             cfg.context_scale_max);
        layout.context_indices.clear();
        for (int id : ctx.indices(grid_w)) {
            if (!target_union.count(id)) layout.context_indices.push_back(id);
        }
        if (!layout.context_indices.empty()) return layout;
    }
    throw std::runtime_error("build_layout: context empty after " +
                             std::to_string(cfg.max_context_resamples) + " resamples");
}

std::string render_layout(const MaskLayout& layout, int grid_h, int grid_w) {
    std::vector<char> cells(static_cast<std::size_t>(grid_h) * grid_w, '.');
    for (int id : layout.context_indices) cells[static_cast<std::size_t>(id)] = 'c';
    for (std::size_t t = 0; t < layout.target_blocks.size(); ++t) {
        const char mark = t < 9 ? static_cast<char>('1' + t) : '#';
        for (int id : layout.target_blocks[t].indices(grid_w)) {
            if (cells[static_cast<std::size_t>(id)] == '.' || cells[static_cast<std::size_t>(id)] == 'c') {
                cells[static_cast<std::size_t>(id)] = mark;
            }
        }
    }
    std::string out;
    for (int r = 0; r < grid_h; ++r) {
        for (int c = 0; c < grid_w; ++c) out += cells[static_cast<std::size_t>(r * grid_w + c)];
        out += '\n';
    }
    return out;
}

}  // namespace njepa
