#pragma once

// Frozen-encoder evaluation: feature extraction, linear probing, low-shot
// label-fraction probing, and representation-collapse diagnostics.

#include <cstdint>
#include <string>
#include <vector>

#include "njepa/dataset.hpp"
#include "njepa/vit.hpp"

namespace njepa {

enum class FeatureSource { last_layer_avg, concat_last_k };

FeatureSource feature_source_from_string(const std::string& s);
std::string to_string(FeatureSource s);

enum class WhichEncoder { student, teacher };

struct ProbeConfig {
    int epochs = 50;
    int batch_size = 64;
    double lr = 0.1;
    double momentum = 0.9;
    FeatureSource source = FeatureSource::last_layer_avg;
    int last_k = 4;          // used by concat_last_k
    double fraction = 1.0;   // label fraction for low-shot probing
};

struct FeatureMatrix {
    int rows = 0, dim = 0;
    std::vector<double> data;  // row-major rows x dim
    std::vector<int> labels;   // empty when the dataset is unlabeled
};

// Full-sequence (unmasked) encoder forward, mean-pooled over patch tokens.
// last_layer_avg -> (rows, embed_dim); concat_last_k -> (rows, k*embed_dim),
// later blocks appearing last. Never records gradients.
FeatureMatrix extract_features(const ModelBundle& bundle, const Dataset& data,
                               FeatureSource source, WhichEncoder which = WhichEncoder::student,
                               int last_k = 4);

// Normalized pixels flattened per image — the no-learning control probe.
FeatureMatrix raw_pixel_features(const Dataset& data);

// Single affine layer, SGD + momentum + cosine lr, cross-entropy on features
// standardized with training-split statistics; returns held-out top-1.
double linear_probe(const FeatureMatrix& train, const FeatureMatrix& held_out,
                    const ProbeConfig& cfg, std::uint64_t seed);

// Class-stratified subsample keeping ceil(fraction * class_size) rows per
// class; selected rows keep their original relative order, so fraction 1
// returns the matrix unchanged.
FeatureMatrix stratified_subsample(const FeatureMatrix& f, double fraction, std::uint64_t seed);

// Probe on a stratified fraction of the training labels.
double low_shot_eval(const ModelBundle& bundle, const Dataset& train, const Dataset& held_out,
                     double fraction, const ProbeConfig& cfg, std::uint64_t seed);

struct RepresentationStats {
    std::vector<double> per_dim_std;     // population std per feature dimension
    double mean_pairwise_cosine = 0.0;   // over distinct row pairs; zero rows count as 0
    double effective_rank = 0.0;         // exp(entropy of singular-value distribution)
};

RepresentationStats representation_stats(const FeatureMatrix& f);

}  // namespace njepa
