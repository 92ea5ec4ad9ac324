#pragma once

// Plain-text key=value run configuration: parsing, overrides, canonical
// re-emission (the text that gets fingerprinted into checkpoints), and
// conversion into the typed configs of the other modules.

#include <cstdint>
#include <string>

#include "njepa/dataset.hpp"
#include "njepa/eval.hpp"
#include "njepa/trainer.hpp"

namespace njepa {

struct RunConfig {
    std::uint64_t seed = 42;
    std::string out_dir = "runs/default";

    std::string data_kind = "synthetic";  // synthetic | path
    std::string data_path;
    int data_classes = 4;
    int data_per_class = 128;
    int data_image_size = 32;
    double data_val_frac = 0.2;

    int patch_size = 4, embed_dim = 64, depth = 4, heads = 4;
    int pred_embed_dim = 32, pred_depth = 2, pred_heads = 4;
    bool share_predictors = false, share_mask_tokens = false;

    MaskConfig mask;
    NoiseParams noise;

    double lambda1 = 0.1, lambda2 = 0.1;
    bool elementwise_smooth_l1 = false;

    std::int64_t epochs = 10, total_steps = 0, batch_size = 32, checkpoint_every = 100;

    double lr_start = 1e-4, lr_peak = 1e-3, lr_final = 1e-6;
    std::int64_t lr_warmup_steps = 40;
    std::string lr_shape = "cosine";  // cosine | constant
    double wd_start = 0.04, wd_final = 0.4;
    double ema_start = 0.996, ema_final = 1.0;
    double ipe_scale = 1.25;

    int probe_epochs = 50, probe_batch_size = 64;
    double probe_lr = 0.1, probe_momentum = 0.9;
    std::string probe_source = "last_layer_avg";
    int probe_last_k = 4;
    double probe_fraction = 1.0;
};

// Parses "key = value" lines ('#' comments and blank lines ignored); unknown
// keys and malformed values are errors. Later lines win.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

// One "key=value" assignment, same key set and validation as the file format.
void apply_override(RunConfig& cfg, const std::string& assignment);

// NJEPA_OUT, when set and non-empty, replaces out_dir.
void apply_env_overrides(RunConfig& cfg);

// Every key in canonical order, values normalized; parsing it back yields an
// identical config.
std::string resolved_text(const RunConfig& cfg);

// Builds the full dataset named by the config (synthetic or on-disk path).
Dataset build_run_dataset(const RunConfig& cfg);

TrainConfig to_train_config(const RunConfig& cfg, int image_h, int image_w, int channels);
ProbeConfig to_probe_config(const RunConfig& cfg);

}  // namespace njepa
