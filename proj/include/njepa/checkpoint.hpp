#pragma once

// Checkpoint container: magic, version, precision tag, config fingerprint,
// rng states, and a name/shape manifest of little-endian parameter blobs
// with optional optimizer moments.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "njepa/tensor.hpp"

namespace njepa {

struct CheckpointEntry {
    std::string name;
    std::vector<int> shape;
    std::vector<real> data;
    bool has_moments = false;
    std::vector<real> m, v;
};

struct CheckpointData {
    std::uint64_t config_fingerprint = 0;
    std::string config_text;  // fully-resolved run configuration
    std::int64_t step = 0;
    std::int64_t opt_step = 0;
    std::vector<std::pair<std::string, std::string>> rng_states;
    std::vector<CheckpointEntry> entries;
};

void write_checkpoint(const std::string& path, const CheckpointData& data);
CheckpointData read_checkpoint(const std::string& path);

// Reads only the header far enough to recover the embedded config text.
std::string read_checkpoint_config(const std::string& path);

}  // namespace njepa
