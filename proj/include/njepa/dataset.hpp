#pragma once

// Image datasets: a small binary container format, PPM directory ingestion,
// and the deterministic synthetic generator used for desk-scale runs.
// Raw pixels are kept alongside the normalized view so containers round-trip
// bit-exactly.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "njepa/tensor.hpp"

namespace njepa {

struct Dataset {
    int height = 0, width = 0, channels = 0;
    bool has_labels = false;
    std::vector<float> raw;       // count*C*H*W, unnormalized, row-major CHW
    std::vector<real> norm;       // same layout, per-channel standardized
    std::vector<int> labels;      // empty when has_labels is false
    std::vector<double> mean, stdev;  // per-channel normalization constants
    std::string split = "train";

    int count() const { return channels ? static_cast<int>(raw.size() / pixels_per_image()) : 0; }
    std::size_t pixels_per_image() const {
        return static_cast<std::size_t>(channels) * height * width;
    }
    int n_classes() const;
    Tensor image(int i) const;       // normalized (C,H,W)
    Tensor image_batch(const std::vector<int>& ids) const;  // normalized (B,C,H,W)
    void renormalize();              // recompute norm from raw using mean/stdev
};

// Oriented gratings: the class fixes the orientation; frequency, phase,
// amplitude, per-channel gain, and pixel noise jitter per sample.
Dataset make_synthetic(std::uint64_t seed, int n_per_class, int classes, int image_size = 32);

// path may be a container file or a directory of binary PPM (P6) images.
// Directory ingestion orders files lexicographically and reads an integer
// class label from a leading "<label>_" filename prefix when every file has
// one.
Dataset load_dataset(const std::string& path);
void save_dataset(const Dataset& d, const std::string& path);

// Deterministic class-stratified split; the second part holds ceil(val_frac *
// class size) samples per class.
std::pair<Dataset, Dataset> split_dataset(const Dataset& d, double val_frac, std::uint64_t seed);

}  // namespace njepa
