#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "njepa/losses.hpp"
#include "njepa/optim.hpp"
#include "njepa/rng.hpp"
#include "njepa/schedules.hpp"
#include "njepa/tensor.hpp"

using namespace njepa;

// Explicit-loop double reimplementations of the loss terms, kept deliberately
// naive (no tensor library involvement) so they can arbitrate the library's
// values to near machine precision.

namespace {

using Block = std::vector<std::vector<double>>;  // tokens x dim

double oracle_smooth_l1_block(const Block& pred, const Block& tgt, bool elementwise) {
    if (elementwise) {
        double acc = 0;
        std::size_t count = 0;
        for (std::size_t t = 0; t < pred.size(); ++t)
            for (std::size_t j = 0; j < pred[t].size(); ++j) {
                const double d = std::abs(pred[t][j] - tgt[t][j]);
                acc += d < 1.0 ? 0.5 * d * d : d - 0.5;
                ++count;
            }
        return acc / static_cast<double>(count);
    }
    double acc = 0;
    for (std::size_t t = 0; t < pred.size(); ++t) {
        double d2 = 0;
        for (std::size_t j = 0; j < pred[t].size(); ++j) {
            const double diff = pred[t][j] - tgt[t][j];
            d2 += diff * diff;
        }
        const double d = std::sqrt(d2);
        acc += d < 1.0 ? 0.5 * d * d : d - 0.5;
    }
    return acc / static_cast<double>(pred.size());
}

double oracle_block_mean_smooth_l1(const std::vector<Block>& preds,
                                   const std::vector<Block>& tgts) {
    double acc = 0;
    for (std::size_t b = 0; b < preds.size(); ++b)
        acc += oracle_smooth_l1_block(preds[b], tgts[b], false);
    return acc / static_cast<double>(preds.size());
}

double oracle_predictor_agreement(const std::vector<Block>& zn, const std::vector<Block>& zc) {
    double acc = 0;
    for (std::size_t b = 0; b < zn.size(); ++b)
        for (std::size_t t = 0; t < zn[b].size(); ++t)
            for (std::size_t j = 0; j < zn[b][t].size(); ++j) {
                const double diff = zn[b][t][j] - zc[b][t][j];
                acc += diff * diff;
            }
    return acc / static_cast<double>(zn.size());
}

Block random_block(Rng& rng, int tokens, int dim, double spread) {
    Block b(static_cast<std::size_t>(tokens), std::vector<double>(static_cast<std::size_t>(dim)));
    for (auto& row : b)
        for (auto& v : row) v = rng.normal(0.0, spread);
    return b;
}

Tensor to_tensor(const Block& b) {
    std::vector<real> flat;
    for (const auto& row : b)
        for (double v : row) flat.push_back(static_cast<real>(v));
    return Tensor::from_vector({static_cast<int>(b.size()), static_cast<int>(b[0].size())},
                               std::move(flat));
}

double rel_diff(double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace

TEST_CASE("smooth-L1 matches the explicit-loop oracle on 100 random blocks") {
    Rng rng(2024);
    for (int trial = 0; trial < 100; ++trial) {
        const int tokens = static_cast<int>(rng.uniform_int(1, 12));
        const int dim = static_cast<int>(rng.uniform_int(1, 24));
        // spread straddling the d=1 branch point so both sides are exercised
        const double spread = rng.uniform(0.05, 2.0);
        const Block pred = random_block(rng, tokens, dim, spread);
        const Block tgt = random_block(rng, tokens, dim, spread);

        const double lib = smooth_l1_block(to_tensor(pred), to_tensor(tgt)).item();
        const double ref = oracle_smooth_l1_block(pred, tgt, false);
        CHECK(rel_diff(lib, ref) < 1e-10);

        const double lib_e = smooth_l1_block(to_tensor(pred), to_tensor(tgt), true).item();
        const double ref_e = oracle_smooth_l1_block(pred, tgt, true);
        CHECK(rel_diff(lib_e, ref_e) < 1e-10);
    }
}

TEST_CASE("block-averaged prediction losses match the oracle on 100 random inputs") {
    Rng rng(77);
    for (int trial = 0; trial < 100; ++trial) {
        const int n_blocks = static_cast<int>(rng.uniform_int(1, 4));
        std::vector<Block> preds, tgts;
        std::vector<Tensor> pred_t, tgt_t;
        for (int b = 0; b < n_blocks; ++b) {
            const int tokens = static_cast<int>(rng.uniform_int(1, 9));
            const int dim = static_cast<int>(rng.uniform_int(2, 16));
            preds.push_back(random_block(rng, tokens, dim, 1.0));
            tgts.push_back(random_block(rng, tokens, dim, 1.0));
            pred_t.push_back(to_tensor(preds.back()));
            tgt_t.push_back(to_tensor(tgts.back()));
        }
        const double ref = oracle_block_mean_smooth_l1(preds, tgts);
        CHECK(rel_diff(loss_ct(pred_t, tgt_t).item(), ref) < 1e-10);
        // the noise-predictor term is the same functional over its own inputs
        CHECK(rel_diff(loss_nt(pred_t, tgt_t).item(), ref) < 1e-10);
    }
}

TEST_CASE("predictor-agreement loss matches the oracle on 100 random inputs") {
    Rng rng(407);
    for (int trial = 0; trial < 100; ++trial) {
        const int n_blocks = static_cast<int>(rng.uniform_int(1, 4));
        std::vector<Block> zn, zc;
        std::vector<Tensor> zn_t, zc_t;
        for (int b = 0; b < n_blocks; ++b) {
            const int tokens = static_cast<int>(rng.uniform_int(1, 9));
            const int dim = static_cast<int>(rng.uniform_int(2, 16));
            zn.push_back(random_block(rng, tokens, dim, 0.7));
            zc.push_back(random_block(rng, tokens, dim, 0.7));
            zn_t.push_back(to_tensor(zn.back()));
            zc_t.push_back(to_tensor(zc.back()));
        }
        const double ref = oracle_predictor_agreement(zn, zc);
        CHECK(rel_diff(loss_cn(zn_t, zc_t).item(), ref) < 1e-10);
    }
}

TEST_CASE("weighted total matches a scalar reference") {
    Rng rng(9);
    for (int trial = 0; trial < 100; ++trial) {
        const double a = rng.uniform(0.0, 2.0);
        const double b = rng.uniform(0.0, 2.0);
        const double c = rng.uniform(0.0, 2.0);
        LossWeights w;
        w.lambda1 = static_cast<real>(rng.uniform(0.0, 1.0));
        w.lambda2 = static_cast<real>(rng.uniform(0.0, 1.0));
        const Tensor t = total_loss(Tensor::scalar(static_cast<real>(a)),
                                    Tensor::scalar(static_cast<real>(b)),
                                    Tensor::scalar(static_cast<real>(c)), w);
        const double ref = a + static_cast<double>(w.lambda1) * b +
                           static_cast<double>(w.lambda2) * c;
        CHECK(rel_diff(t.item(), ref) < 1e-12);
    }
}

TEST_CASE("the two smooth-L1 branches meet continuously at distance 1") {
    // approach the branch point from both sides; value and slope both converge
    // to the shared limit 0.5
    for (double eps : {1e-3, 1e-6, 1e-9}) {
        const double below = 0.5 * (1 - eps) * (1 - eps);
        const double above = (1 + eps) - 0.5;
        CHECK(std::abs(below - 0.5) < 2 * eps);
        CHECK(std::abs(above - 0.5) < 2 * eps);

        Tensor p_below = Tensor::from_vector({1, 1}, {static_cast<real>(1 - eps)});
        Tensor p_above = Tensor::from_vector({1, 1}, {static_cast<real>(1 + eps)});
        Tensor z = Tensor::zeros({1, 1});
        const double lib_below = smooth_l1_block(p_below, z).item();
        const double lib_above = smooth_l1_block(p_above, z).item();
        CHECK(std::abs(lib_above - lib_below) < 3 * eps);
    }
    // exactly at the branch point both formulas give 0.5
    Tensor p = Tensor::from_vector({1, 1}, {real(1)});
    CHECK(smooth_l1_block(p, Tensor::zeros({1, 1})).item() == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("teacher update tracks a scalar reference under the scheduled momentum") {
    ScheduleSpec spec;
    spec.start = 0.996;
    spec.final_value = 1.0;
    spec.total_steps = 1000;
    spec.ipe_scale = 1.25;

    Rng rng(55);
    const int dim = 5;
    std::vector<double> student_ref(dim), teacher_ref(dim);
    std::vector<real> sv(dim), tv(dim);
    for (int i = 0; i < dim; ++i) {
        student_ref[i] = rng.normal();
        teacher_ref[i] = student_ref[i];  // teacher starts as a copy
        sv[static_cast<std::size_t>(i)] = static_cast<real>(student_ref[i]);
        tv[static_cast<std::size_t>(i)] = static_cast<real>(teacher_ref[i]);
    }
    std::vector<std::pair<std::string, Tensor>> student = {
        {"p", Tensor::from_vector({dim}, sv)}};
    std::vector<std::pair<std::string, Tensor>> teacher = {
        {"p", Tensor::from_vector({dim}, tv)}};

    for (std::int64_t step = 1; step <= spec.total_steps; ++step) {
        // the student drifts every step; the teacher follows through the schedule
        for (int i = 0; i < dim; ++i) {
            const double delta = rng.normal(0.0, 0.01);
            student_ref[i] += delta;
            student[0].second.values()[static_cast<std::size_t>(i)] =
                static_cast<real>(student_ref[i]);
        }
        const double q = ema_momentum_at(spec, step);
        ema_update(teacher, student, q);
        for (int i = 0; i < dim; ++i)
            teacher_ref[i] = q * teacher_ref[i] + (1 - q) * student_ref[i];

        if (step % 100 == 0 || step == spec.total_steps) {
            for (int i = 0; i < dim; ++i) {
                const double got =
                    teacher[0].second.values()[static_cast<std::size_t>(i)];
                CHECK(rel_diff(got, teacher_ref[i]) < 1e-12);
            }
        }
    }
    // by the end the momentum has climbed most of the way to 1
    CHECK(ema_momentum_at(spec, spec.total_steps) == doctest::Approx(0.9992).epsilon(1e-12));
}
