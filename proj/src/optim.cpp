#include "njepa/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace njepa {

void AdamW::init(const std::vector<std::pair<std::string, Tensor>>& params) {
    step_count = 0;
    m.clear();
    v.clear();
    for (const auto& [name, t] : params) {
        m.emplace_back(static_cast<std::size_t>(t.numel()), real(0));
        v.emplace_back(static_cast<std::size_t>(t.numel()), real(0));
    }
}

void AdamW::step(std::vector<std::pair<std::string, Tensor>>& params, double lr, double wd) {
    if (m.size() != params.size()) throw std::logic_error("adamw: moments not initialized for params");
    ++step_count;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor& t = params[pi].second;
        if (!t.has_grad()) continue;
        const std::vector<real>& g = t.grad();
        for (real gv : g) {
            if (!std::isfinite(gv)) {
                throw std::runtime_error("adamw: non-finite gradient in " + params[pi].first);
            }
        }
        real* p = t.data();
        real* mi = m[pi].data();
        real* vi = v[pi].data();
        const std::size_t n = g.size();
        for (std::size_t i = 0; i < n; ++i) {
            const double gd = static_cast<double>(g[i]);
            const double mn = beta1 * mi[i] + (1.0 - beta1) * gd;
            const double vn = beta2 * vi[i] + (1.0 - beta2) * gd * gd;
            mi[i] = static_cast<real>(mn);
            vi[i] = static_cast<real>(vn);
            const double mhat = mn / bc1;
            const double vhat = vn / bc2;
            const double upd = lr * wd * p[i] + lr * mhat / (std::sqrt(vhat) + eps);
            p[i] = static_cast<real>(p[i] - upd);
        }
    }
}

void adamw_step(AdamW& state, std::vector<std::pair<std::string, Tensor>>& params,
                double lr, double wd) {
    state.step(params, lr, wd);
}

void ema_update(std::vector<std::pair<std::string, Tensor>>& teacher_params,
                const std::vector<std::pair<std::string, Tensor>>& student_params, double q) {
    if (teacher_params.size() != student_params.size()) {
        throw std::invalid_argument("ema_update: parameter list lengths differ");
    }
    for (std::size_t i = 0; i < teacher_params.size(); ++i) {
        Tensor& t = teacher_params[i].second;
        const Tensor& s = student_params[i].second;
        if (t.shape() != s.shape()) {
            throw std::invalid_argument("ema_update: shape mismatch at " + teacher_params[i].first);
        }
        real* tp = t.data();
        const real* sp = s.data();
        const std::int64_t n = t.numel();
        for (std::int64_t j = 0; j < n; ++j) {
            tp[j] = static_cast<real>(q * static_cast<double>(tp[j]) +
                                      (1.0 - q) * static_cast<double>(sp[j]));
        }
    }
}

}  // namespace njepa
