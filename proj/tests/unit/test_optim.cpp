#include "doctest.h"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "njepa/optim.hpp"
#include "njepa/rng.hpp"
#include "njepa/tensor.hpp"

using namespace njepa;

namespace {

std::vector<std::pair<std::string, Tensor>> one_param(real value, std::vector<int> shape = {1}) {
    Tensor t = Tensor::full(std::move(shape), value, true);
    return {{"p", t}};
}

void set_grad(Tensor& t, const std::vector<real>& g) {
    ensure_grad(*t.node);
    t.node->grad = g;
}

}  // namespace

TEST_CASE("zero gradient and zero decay leave the parameter unchanged") {
    auto params = one_param(real(1.25));
    set_grad(params[0].second, {0});
    AdamW opt;
    opt.init(params);
    opt.step(params, 1e-3, 0.0);
    CHECK(params[0].second.values()[0] == real(1.25));
}

TEST_CASE("decoupled decay is a pure multiplicative shrink when grads are zero") {
    auto params = one_param(real(1.0));
    set_grad(params[0].second, {0});
    AdamW opt;
    opt.init(params);
    opt.step(params, 0.1, 0.5);
    CHECK(params[0].second.values()[0] == doctest::Approx(1.0 - 0.1 * 0.5).epsilon(1e-6));
}

TEST_CASE("the first update moves by roughly lr in the gradient direction") {
    // bias-corrected m/sqrt(v) equals sign(g) on step one
    auto params = one_param(real(0));
    set_grad(params[0].second, {3});
    AdamW opt;
    opt.init(params);
    opt.step(params, 1e-2, 0.0);
    CHECK(params[0].second.values()[0] == doctest::Approx(-1e-2).epsilon(1e-3));
    CHECK(opt.step_count == 1);
}

TEST_CASE("parameters without a populated gradient are skipped entirely") {
    Tensor a = Tensor::full({1}, real(2), true);
    Tensor b = Tensor::full({1}, real(2), true);
    std::vector<std::pair<std::string, Tensor>> params = {{"a", a}, {"b", b}};
    set_grad(params[0].second, {1});
    AdamW opt;
    opt.init(params);
    opt.step(params, 1e-2, 0.5);  // decay would shrink `b` if it were touched
    CHECK(params[0].second.values()[0] != real(2));
    CHECK(params[1].second.values()[0] == real(2));
}

TEST_CASE("non-finite gradients abort the step") {
    auto params = one_param(real(1));
    set_grad(params[0].second, {std::numeric_limits<real>::quiet_NaN()});
    AdamW opt;
    opt.init(params);
    CHECK_THROWS_AS(opt.step(params, 1e-3, 0.0), std::runtime_error);
}

TEST_CASE("a quadratic bowl converges under AdamW") {
    Tensor x = Tensor::full({1}, real(3), true);
    std::vector<std::pair<std::string, Tensor>> params = {{"x", x}};
    AdamW opt;
    opt.init(params);
    for (int i = 0; i < 2000; ++i) {
        x.zero_grad();
        Tape tape;
        Tape::Scope scope(tape);
        Tensor loss = sum(square(x));
        backward(loss);
        opt.step(params, 1e-2, 0.0);
    }
    const double fx = static_cast<double>(x.values()[0]) * x.values()[0];
    CHECK(fx < 1e-6);
}

TEST_CASE("moments track their parameters across steps") {
    auto params = one_param(real(1), {3});
    set_grad(params[0].second, {1, -2, 3});
    AdamW opt;
    opt.init(params);
    REQUIRE(opt.m.size() == 1);
    CHECK(opt.m[0].size() == 3);
    opt.step(params, 1e-3, 0.0);
    CHECK(opt.m[0][1] == doctest::Approx(0.1 * -2).epsilon(1e-5));  // (1-beta1) * g
    CHECK(opt.v[0][2] == doctest::Approx(0.001 * 9).epsilon(1e-4));  // (1-beta2) * g^2
}

// ---- EMA -------------------------------------------------------------------------

TEST_CASE("ema at the fixed point leaves the teacher unchanged") {
    Tensor s = Tensor::full({4}, real(0.5));
    Tensor t = Tensor::full({4}, real(0.5));
    std::vector<std::pair<std::string, Tensor>> student = {{"w", s}};
    std::vector<std::pair<std::string, Tensor>> teacher = {{"w", t}};
    ema_update(teacher, student, 0.996);
    for (real v : t.values()) CHECK(v == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("q = 1 freezes the teacher") {
    Tensor s = Tensor::full({4}, real(9));
    Tensor t = Tensor::full({4}, real(0.25));
    std::vector<std::pair<std::string, Tensor>> student = {{"w", s}};
    std::vector<std::pair<std::string, Tensor>> teacher = {{"w", t}};
    ema_update(teacher, student, 1.0);
    for (real v : t.values()) CHECK(v == real(0.25));
}

TEST_CASE("ema mixes by exactly (1 - q)") {
    Tensor s = Tensor::full({1}, real(1));
    Tensor t = Tensor::full({1}, real(0));
    std::vector<std::pair<std::string, Tensor>> student = {{"w", s}};
    std::vector<std::pair<std::string, Tensor>> teacher = {{"w", t}};
    ema_update(teacher, student, 0.996);
    CHECK(t.values()[0] == doctest::Approx(0.004).epsilon(1e-5));
}

TEST_CASE("ema rejects mismatched topologies") {
    Tensor s = Tensor::zeros({2});
    Tensor t = Tensor::zeros({3});
    std::vector<std::pair<std::string, Tensor>> student = {{"w", s}};
    std::vector<std::pair<std::string, Tensor>> teacher = {{"w", t}};
    CHECK_THROWS_AS(ema_update(teacher, student, 0.996), std::invalid_argument);

    std::vector<std::pair<std::string, Tensor>> empty;
    CHECK_THROWS_AS(ema_update(empty, student, 0.996), std::invalid_argument);
}

TEST_CASE("teacher trajectory stays inside the student/teacher envelope") {
    Rng rng(3);
    Tensor s = Tensor::full({1}, real(0), true);
    Tensor t = Tensor::full({1}, real(1));
    std::vector<std::pair<std::string, Tensor>> student = {{"w", s}};
    std::vector<std::pair<std::string, Tensor>> teacher = {{"w", t}};
    real lo = 1, hi = 1;  // envelope starts at the teacher initialization
    for (int i = 0; i < 200; ++i) {
        s.values()[0] = static_cast<real>(rng.normal());
        lo = std::min(lo, s.values()[0]);
        hi = std::max(hi, s.values()[0]);
        ema_update(teacher, student, 0.996);
        CHECK(t.values()[0] >= lo);
        CHECK(t.values()[0] <= hi);
    }
}
