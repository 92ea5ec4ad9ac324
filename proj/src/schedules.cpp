#include "njepa/schedules.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace njepa {

namespace {
constexpr double kPi = 3.14159265358979323846;

void check_step(const ScheduleSpec& spec, std::int64_t step, const char* who) {
    if (step < 0 || step > spec.total_steps) {
        throw std::out_of_range(std::string(who) + ": step " + std::to_string(step) +
                                " outside [0, " + std::to_string(spec.total_steps) + "]");
    }
    if (spec.total_steps < 1) throw std::invalid_argument(std::string(who) + ": total_steps < 1");
    if (spec.ipe_scale < 1.0) throw std::invalid_argument(std::string(who) + ": ipe_scale < 1");
}

// Endpoints are returned verbatim so that phase 0 / phase 1 are bit-exact
// rather than accumulating a rounding step through the blend.
double cosine_leg(double from, double to, double phase) {
    if (phase <= 0.0) return from;
    if (phase >= 1.0) return to;
    return to + 0.5 * (from - to) * (1.0 + std::cos(kPi * phase));
}

double linear_leg(double from, double to, double phase) {
    if (phase <= 0.0) return from;
    if (phase >= 1.0) return to;
    return from + (to - from) * phase;
}
}  // namespace

double lr_at(const ScheduleSpec& spec, std::int64_t step) {
    check_step(spec, step, "lr_at");
    if (spec.warmup_steps > 0 && step < spec.warmup_steps) {
        return linear_leg(spec.start, spec.peak,
                          static_cast<double>(step) / static_cast<double>(spec.warmup_steps));
    }
    if (spec.lr_shape == LrShape::constant) return spec.peak;
    const double period = spec.ipe_scale * static_cast<double>(spec.total_steps) -
                          static_cast<double>(spec.warmup_steps);
    const double phase = period > 0 ? static_cast<double>(step - spec.warmup_steps) / period : 1.0;
    return cosine_leg(spec.peak, spec.final_value, phase);
}

double wd_at(const ScheduleSpec& spec, std::int64_t step) {
    check_step(spec, step, "wd_at");
    const double phase = static_cast<double>(step) / (spec.ipe_scale * static_cast<double>(spec.total_steps));
    return cosine_leg(spec.start, spec.final_value, phase);
}

double ema_momentum_at(const ScheduleSpec& spec, std::int64_t step) {
    check_step(spec, step, "ema_momentum_at");
    const double phase = static_cast<double>(step) / (spec.ipe_scale * static_cast<double>(spec.total_steps));
    return linear_leg(spec.start, spec.final_value, phase);
}

}  // namespace njepa
