#pragma once

// The optimization loop: schedule-driven AdamW on student + predictors,
// EMA teacher updates, metrics CSV, checkpoint save/resume.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "njepa/checkpoint.hpp"
#include "njepa/dataset.hpp"
#include "njepa/losses.hpp"
#include "njepa/masking.hpp"
#include "njepa/noise.hpp"
#include "njepa/optim.hpp"
#include "njepa/rng.hpp"
#include "njepa/schedules.hpp"
#include "njepa/vit.hpp"

namespace njepa {

struct TrainConfig {
    EncoderConfig enc;
    PredictorConfig pred;
    bool share_predictors = false;
    bool share_mask_tokens = false;
    MaskConfig mask;
    NoiseParams noise;
    LossWeights weights;
    bool elementwise_smooth_l1 = false;
    std::uint64_t seed = 42;
    std::int64_t epochs = 10;
    std::int64_t total_steps_override = 0;  // > 0 wins over epochs
    std::int64_t batch_size = 32;
    std::int64_t checkpoint_every = 100;
    double lr_start = 1e-4, lr_peak = 1e-3, lr_final = 1e-6;
    std::int64_t lr_warmup_steps = 0;
    LrShape lr_shape = LrShape::cosine;
    double wd_start = 0.04, wd_final = 0.4;
    double ema_start = 0.996, ema_final = 1.0;
    double ipe_scale = 1.25;
    std::string out_dir = "runs/default";
};

// The three schedules plus the step accounting they were built from.
struct ScheduleSet {
    ScheduleSpec lr, wd, ema;
    std::int64_t iters_per_epoch = 0;
    std::int64_t total_steps = 0;
};

// Derives iters/epoch (drop-remainder), total executed steps, and the three
// schedule specs from a train config and a training-split size.
ScheduleSet make_schedules(const TrainConfig& cfg, int dataset_size);

// Pinned per-block inputs for one batch: everything random is drawn in
// prepare_step, so a loss evaluation over StepInputs is a deterministic
// function of the parameters (which is what the finite-difference checks
// of the full step rely on).
struct BlockInputs {
    std::vector<int> positions;
    Tensor psi_clean;   // predictor-width position rows for the block
    Tensor psi_noised;  // psi_clean + drawn noise
    double sigma = 0;
};

struct StepInputs {
    std::vector<int> image_ids;
    std::vector<MaskLayout> layouts;
    std::vector<std::vector<BlockInputs>> blocks;  // [image][target block]
};

class Trainer {
public:
    Trainer(const TrainConfig& cfg, std::string resolved_config_text, int dataset_size);

    std::vector<int> batch_ids(std::int64_t step_index) const;  // 0-based step
    StepInputs prepare_step(const std::vector<int>& image_ids);
    std::pair<Tensor, LossReport> compute_batch_loss(const Dataset& data, const StepInputs& in) const;
    LossReport train_step(const Dataset& data);
    void train_loop(const Dataset& data);

    void save(const std::string& path) const;
    void restore(const CheckpointData& cp);  // same-config resume

    const TrainConfig& config() const { return cfg_; }
    const std::string& config_text() const { return config_text_; }
    ModelBundle& bundle() { return bundle_; }
    const ModelBundle& bundle() const { return bundle_; }
    AdamW& optimizer() { return opt_; }
    std::int64_t step() const { return step_; }  // completed steps
    std::int64_t total_steps() const { return total_steps_; }
    std::int64_t iters_per_epoch() const { return iters_per_epoch_; }
    const ScheduleSpec& lr_spec() const { return lr_spec_; }
    const ScheduleSpec& wd_spec() const { return wd_spec_; }
    const ScheduleSpec& ema_spec() const { return ema_spec_; }
    Rng& noise_rng() { return noise_rng_; }
    Rng& mask_rng() { return mask_rng_; }

private:
    TrainConfig cfg_;
    std::string config_text_;
    int dataset_size_ = 0;
    std::int64_t iters_per_epoch_ = 0, total_steps_ = 0, step_ = 0;
    ModelBundle bundle_;
    AdamW opt_;
    Rng mask_rng_, noise_rng_;
    std::uint64_t data_seed_ = 0;
    ScheduleSpec lr_spec_, wd_spec_, ema_spec_;
};

// Copies checkpoint parameter values into a freshly built bundle (used by
// evaluation, which tolerates differing non-model config keys).
void load_bundle_params(ModelBundle& bundle, const CheckpointData& cp);

// Identity of a run configuration for resume checks; insensitive to the
// output directory so a run can be resumed into a fresh location.
std::uint64_t config_fingerprint(const std::string& config_text);

std::string format_real(real v);      // round-trip decimal form
std::string format_double(double v);

}  // namespace njepa
