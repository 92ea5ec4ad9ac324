#include "doctest.h"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <vector>

#include "njepa/dataset.hpp"
#include "njepa/eval.hpp"
#include "njepa/rng.hpp"
#include "njepa/vit.hpp"

using namespace njepa;

namespace {

ModelBundle tiny_bundle(std::uint64_t seed = 0) {
    EncoderConfig e;
    e.grid_h = e.grid_w = 4;
    e.patch_size = 4;
    e.embed_dim = 16;
    e.depth = 2;
    e.heads = 2;
    PredictorConfig p;
    p.embed_dim = 8;
    p.depth = 1;
    p.heads = 2;
    p.out_dim = 16;
    Rng rng(seed);
    return make_bundle(e, p, false, false, rng);
}

std::uint64_t param_hash(const ModelBundle& b) {
    std::uint64_t h = 14695981039346656037ULL;
    auto mix = [&h](const std::vector<real>& v) {
        for (real x : v) {
            std::uint64_t bits = 0;
            std::memcpy(&bits, &x, sizeof(real));
            h ^= bits;
            h *= 1099511628211ULL;
        }
    };
    for (const auto& [n, t] : b.trainable) mix(t.values());
    for (const auto& [n, t] : b.teacher_encoder) mix(t.values());
    return h;
}

// linearly separable two-class features
std::pair<FeatureMatrix, FeatureMatrix> separable_features(int per_class, int dim) {
    Rng rng(7);
    auto make = [&](int rows_per_class) {
        FeatureMatrix f;
        f.dim = dim;
        for (int c = 0; c < 2; ++c) {
            for (int i = 0; i < rows_per_class; ++i) {
                for (int k = 0; k < dim; ++k) {
                    const double center = c == 0 ? -4.0 : 4.0;
                    f.data.push_back(center + rng.normal());
                }
                f.labels.push_back(c);
                ++f.rows;
            }
        }
        return f;
    };
    return {make(per_class), make(per_class / 2)};
}

}  // namespace

TEST_CASE("feature dimensions follow the source") {
    ModelBundle b = tiny_bundle();
    Dataset d = make_synthetic(3, 4, 2, 16);

    FeatureMatrix last = extract_features(b, d, FeatureSource::last_layer_avg);
    CHECK(last.rows == d.count());
    CHECK(last.dim == 16);
    CHECK(last.labels == d.labels);

    FeatureMatrix cat = extract_features(b, d, FeatureSource::concat_last_k,
                                         WhichEncoder::student, 2);
    CHECK(cat.rows == d.count());
    CHECK(cat.dim == 32);
}

TEST_CASE("extraction is deterministic and row-independent") {
    ModelBundle b = tiny_bundle(1);
    Dataset d = make_synthetic(4, 3, 2, 16);

    FeatureMatrix f1 = extract_features(b, d, FeatureSource::last_layer_avg);
    FeatureMatrix f2 = extract_features(b, d, FeatureSource::last_layer_avg);
    CHECK(f1.data == f2.data);

    // extracting a prefix gives the same leading rows: no batch leakage
    Dataset prefix = d;
    const std::size_t px = d.pixels_per_image();
    prefix.raw.resize(2 * px);
    prefix.norm.resize(2 * px);
    prefix.labels.resize(2);
    FeatureMatrix fp = extract_features(b, prefix, FeatureSource::last_layer_avg);
    for (int k = 0; k < 2 * f1.dim; ++k) {
        CHECK(fp.data[static_cast<std::size_t>(k)] == f1.data[static_cast<std::size_t>(k)]);
    }
}

TEST_CASE("duplicated images give identical feature rows") {
    ModelBundle b = tiny_bundle(2);
    Dataset d = make_synthetic(5, 2, 2, 16);
    // duplicate image 0 over image 1
    const std::size_t px = d.pixels_per_image();
    for (std::size_t k = 0; k < px; ++k) {
        d.raw[px + k] = d.raw[k];
        d.norm[px + k] = d.norm[k];
    }
    FeatureMatrix f = extract_features(b, d, FeatureSource::last_layer_avg);
    for (int k = 0; k < f.dim; ++k) {
        CHECK(f.data[static_cast<std::size_t>(k)] ==
              f.data[static_cast<std::size_t>(f.dim + k)]);
    }
}

TEST_CASE("teacher features come from the teacher parameters") {
    ModelBundle b = tiny_bundle(3);
    Dataset d = make_synthetic(6, 2, 2, 16);
    // push the student away from the teacher
    for (auto& [name, t] : b.student_encoder) {
        for (auto& v : t.values()) v += real(0.05);
    }
    FeatureMatrix fs = extract_features(b, d, FeatureSource::last_layer_avg,
                                        WhichEncoder::student);
    FeatureMatrix ft = extract_features(b, d, FeatureSource::last_layer_avg,
                                        WhichEncoder::teacher);
    CHECK(fs.data != ft.data);
}

TEST_CASE("raw pixel features flatten the normalized images") {
    Dataset d = make_synthetic(7, 2, 2, 16);
    FeatureMatrix f = raw_pixel_features(d);
    CHECK(f.rows == d.count());
    CHECK(f.dim == 3 * 16 * 16);
    CHECK(f.data[0] == static_cast<double>(d.norm[0]));
}

TEST_CASE("extraction rejects an empty dataset") {
    ModelBundle b = tiny_bundle(4);
    Dataset empty;
    CHECK_THROWS_AS(extract_features(b, empty, FeatureSource::last_layer_avg),
                    std::invalid_argument);
}

TEST_CASE("extraction leaves every parameter untouched") {
    ModelBundle b = tiny_bundle(5);
    Dataset d = make_synthetic(8, 3, 2, 16);
    const std::uint64_t before = param_hash(b);
    (void)extract_features(b, d, FeatureSource::concat_last_k, WhichEncoder::student, 2);
    FeatureMatrix f = extract_features(b, d, FeatureSource::last_layer_avg);
    FeatureMatrix held = f;
    ProbeConfig cfg;
    cfg.epochs = 3;
    (void)linear_probe(f, held, cfg, 0);
    CHECK(param_hash(b) == before);
}

// ---- linear probe ------------------------------------------------------------------

TEST_CASE("a separable problem probes to full accuracy") {
    auto [train, held] = separable_features(40, 4);
    ProbeConfig cfg;
    cfg.epochs = 20;
    CHECK(linear_probe(train, held, cfg, 1) == doctest::Approx(1.0));
}

TEST_CASE("shuffled labels probe to chance") {
    Rng rng(9);
    FeatureMatrix train, held;
    train.dim = held.dim = 8;
    auto fill = [&](FeatureMatrix& f, int rows) {
        for (int i = 0; i < rows; ++i) {
            for (int k = 0; k < f.dim; ++k) f.data.push_back(rng.normal());
            f.labels.push_back(static_cast<int>(rng.uniform_int(0, 3)));
            ++f.rows;
        }
    };
    fill(train, 200);
    fill(held, 200);
    ProbeConfig cfg;
    cfg.epochs = 10;
    const double acc = linear_probe(train, held, cfg, 2);
    CHECK(acc > 0.05);  // not degenerate
    CHECK(acc < 0.45);  // and no better than noise allows
}

TEST_CASE("probe accuracy is deterministic per seed") {
    auto [train, held] = separable_features(20, 3);
    ProbeConfig cfg;
    cfg.epochs = 5;
    CHECK(linear_probe(train, held, cfg, 3) == linear_probe(train, held, cfg, 3));
}

TEST_CASE("a single-class training split is rejected") {
    FeatureMatrix f;
    f.rows = 4;
    f.dim = 2;
    f.data.assign(8, 0.5);
    f.labels.assign(4, 0);
    ProbeConfig cfg;
    CHECK_THROWS_AS(linear_probe(f, f, cfg, 0), std::invalid_argument);
}

// ---- stratified subsampling ----------------------------------------------------------

TEST_CASE("subsampling keeps ceil(fraction * class size) rows in original order") {
    FeatureMatrix f;
    f.dim = 1;
    for (int i = 0; i < 30; ++i) {
        f.data.push_back(i);
        f.labels.push_back(i % 3);
        ++f.rows;
    }
    FeatureMatrix s = stratified_subsample(f, 0.4, 11);
    CHECK(s.rows == 12);  // ceil(0.4 * 10) = 4 per class
    std::vector<int> hist(3, 0);
    for (int l : s.labels) ++hist[static_cast<std::size_t>(l)];
    for (int h : hist) CHECK(h == 4);
    // original relative order: feature values strictly increase
    for (int i = 1; i < s.rows; ++i) {
        CHECK(s.data[static_cast<std::size_t>(i)] > s.data[static_cast<std::size_t>(i - 1)]);
    }

    // deterministic per seed, different across seeds
    FeatureMatrix s2 = stratified_subsample(f, 0.4, 11);
    CHECK(s.data == s2.data);
    FeatureMatrix s3 = stratified_subsample(f, 0.4, 12);
    CHECK(s.data != s3.data);

    // fraction 1 is the identity
    FeatureMatrix all = stratified_subsample(f, 1.0, 5);
    CHECK(all.data == f.data);
    CHECK(all.labels == f.labels);
}

TEST_CASE("low-shot at fraction 1 equals the plain probe") {
    ModelBundle b = tiny_bundle(6);
    Dataset d = make_synthetic(10, 6, 2, 16);
    auto [train, held] = split_dataset(d, 0.25, 1);
    ProbeConfig cfg;
    cfg.epochs = 4;

    const double full = low_shot_eval(b, train, held, 1.0, cfg, 0);
    FeatureMatrix ftr = extract_features(b, train, cfg.source, WhichEncoder::student, cfg.last_k);
    FeatureMatrix fhe = extract_features(b, held, cfg.source, WhichEncoder::student, cfg.last_k);
    CHECK(full == linear_probe(ftr, fhe, cfg, 0));
}

// ---- representation statistics --------------------------------------------------------

TEST_CASE("identical rows are the collapse signature") {
    FeatureMatrix f;
    f.rows = 5;
    f.dim = 3;
    for (int i = 0; i < 5; ++i) {
        f.data.push_back(1.0);
        f.data.push_back(-2.0);
        f.data.push_back(0.5);
    }
    RepresentationStats s = representation_stats(f);
    for (double sd : s.per_dim_std) CHECK(sd == doctest::Approx(0.0));
    CHECK(s.mean_pairwise_cosine == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(s.effective_rank == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("iid gaussian features have near-full effective rank") {
    Rng rng(13);
    FeatureMatrix f;
    f.rows = 400;
    f.dim = 16;
    for (int i = 0; i < f.rows * f.dim; ++i) f.data.push_back(rng.normal());
    f.labels.assign(static_cast<std::size_t>(f.rows), 0);
    RepresentationStats s = representation_stats(f);
    CHECK(s.effective_rank > 14.0);
    CHECK(std::abs(s.mean_pairwise_cosine) < 0.1);
    for (double sd : s.per_dim_std) CHECK(sd > 0.8);
}

TEST_CASE("statistics are invariant to row order") {
    Rng rng(14);
    FeatureMatrix f;
    f.rows = 40;
    f.dim = 6;
    for (int i = 0; i < f.rows * f.dim; ++i) f.data.push_back(rng.normal());

    FeatureMatrix rev = f;
    for (int i = 0; i < f.rows; ++i) {
        for (int k = 0; k < f.dim; ++k) {
            rev.data[static_cast<std::size_t>(i * f.dim + k)] =
                f.data[static_cast<std::size_t>((f.rows - 1 - i) * f.dim + k)];
        }
    }
    RepresentationStats a = representation_stats(f);
    RepresentationStats b = representation_stats(rev);
    CHECK(a.mean_pairwise_cosine == doctest::Approx(b.mean_pairwise_cosine).epsilon(1e-9));
    CHECK(a.effective_rank == doctest::Approx(b.effective_rank).epsilon(1e-9));
    for (int k = 0; k < f.dim; ++k) {
        CHECK(a.per_dim_std[static_cast<std::size_t>(k)] ==
              doctest::Approx(b.per_dim_std[static_cast<std::size_t>(k)]).epsilon(1e-9));
    }
}

TEST_CASE("stats require at least two rows") {
    FeatureMatrix f;
    f.rows = 1;
    f.dim = 2;
    f.data = {1.0, 2.0};
    CHECK_THROWS_AS(representation_stats(f), std::invalid_argument);
}
