#pragma once

// Hyper-parameter schedules with period stretching: every schedule is laid
// out over ipe_scale * total_steps, but only steps 0..total_steps are ever
// executed, truncating the aggressive tail of the cosine / ramp.

#include <cstdint>

namespace njepa {

enum class LrShape { cosine, constant };

struct ScheduleSpec {
    std::int64_t warmup_steps = 0;   // lr only
    double start = 0.0;              // value at step 0 (lr: warmup start)
    double peak = 0.0;               // lr only: value at end of warmup
    double final_value = 0.0;        // asymptote at the stretched period end
    std::int64_t total_steps = 1;    // executed steps
    double ipe_scale = 1.25;
    LrShape lr_shape = LrShape::cosine;
};

// Linear warmup start->peak over warmup_steps, then cosine peak->final over
// (ipe_scale*total_steps - warmup_steps); constant-after-warmup when
// lr_shape == constant. Steps outside [0, total_steps] are an error.
double lr_at(const ScheduleSpec& spec, std::int64_t step);

// Cosine start->final over ipe_scale*total_steps, truncated at total_steps.
double wd_at(const ScheduleSpec& spec, std::int64_t step);

// Linear start->final over ipe_scale*total_steps, truncated at total_steps.
double ema_momentum_at(const ScheduleSpec& spec, std::int64_t step);

}  // namespace njepa
