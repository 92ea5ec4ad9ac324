#include "njepa/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include "njepa/rng.hpp"

namespace njepa {

FeatureSource feature_source_from_string(const std::string& s) {
    if (s == "last_layer_avg") return FeatureSource::last_layer_avg;
    if (s == "concat_last_k") return FeatureSource::concat_last_k;
    throw std::invalid_argument("unknown feature source: " + s);
}

std::string to_string(FeatureSource s) {
    return s == FeatureSource::last_layer_avg ? "last_layer_avg" : "concat_last_k";
}

// ---------------------------------------------------------------------------
// feature extraction

FeatureMatrix extract_features(const ModelBundle& bundle, const Dataset& data,
                               FeatureSource source, WhichEncoder which, int last_k) {
    if (data.count() == 0) throw std::invalid_argument("extract_features: empty dataset");
    const Encoder& enc = which == WhichEncoder::teacher ? bundle.teacher : bundle.student;
    const int depth = bundle.enc_cfg.depth;
    if (source == FeatureSource::concat_last_k && (last_k < 1 || last_k > depth))
        throw std::invalid_argument("extract_features: last_k outside encoder depth");

    FeatureMatrix f;
    f.dim = bundle.enc_cfg.embed_dim * (source == FeatureSource::concat_last_k ? last_k : 1);
    f.labels = data.labels;

    Tape::NoGrad guard;
    const int chunk = 64;
    for (int start = 0; start < data.count(); start += chunk) {
        const int n = std::min(chunk, data.count() - start);
        std::vector<int> ids(static_cast<std::size_t>(n));
        std::iota(ids.begin(), ids.end(), start);
        Tensor patches = patchify(data.image_batch(ids), bundle.enc_cfg.patch_size);
        Tensor x = add(enc.embed(patches), bundle.pos_enc);  // pos rows broadcast over batch
        std::vector<Tensor> taps;
        Tensor out = enc.forward(x, &taps);

        Tensor feat;
        if (source == FeatureSource::last_layer_avg) {
            feat = mean(out, 1);
        } else {
            std::vector<Tensor> parts;
            for (int i = depth - last_k; i < depth; ++i) parts.push_back(mean(taps[i], 1));
            feat = concat(parts, 1);
        }
        const real* p = feat.data();
        for (std::int64_t i = 0; i < feat.numel(); ++i)
            f.data.push_back(static_cast<double>(p[i]));
        f.rows += n;
    }
    return f;
}

FeatureMatrix raw_pixel_features(const Dataset& data) {
    if (data.count() == 0) throw std::invalid_argument("raw_pixel_features: empty dataset");
    FeatureMatrix f;
    f.rows = data.count();
    f.dim = data.pixels_per_image();
    f.labels = data.labels;
    f.data.reserve(data.norm.size());
    for (real v : data.norm) f.data.push_back(static_cast<double>(v));
    return f;
}

// ---------------------------------------------------------------------------
// linear probe

namespace {

struct Standardizer {
    std::vector<double> mu, inv_sd;
    std::vector<double> apply(const FeatureMatrix& f) const {
        std::vector<double> out(f.data.size());
        const int d = f.dim;
        for (int r = 0; r < f.rows; ++r)
            for (int c = 0; c < d; ++c)
                out[static_cast<std::size_t>(r) * d + c] =
                    (f.data[static_cast<std::size_t>(r) * d + c] - mu[c]) * inv_sd[c];
        return out;
    }
};

Standardizer fit_standardizer(const FeatureMatrix& train) {
    const int d = train.dim;
    Standardizer st;
    st.mu.assign(static_cast<std::size_t>(d), 0.0);
    st.inv_sd.assign(static_cast<std::size_t>(d), 1.0);
    for (int r = 0; r < train.rows; ++r)
        for (int c = 0; c < d; ++c) st.mu[c] += train.data[static_cast<std::size_t>(r) * d + c];
    for (int c = 0; c < d; ++c) st.mu[c] /= train.rows;
    std::vector<double> var(static_cast<std::size_t>(d), 0.0);
    for (int r = 0; r < train.rows; ++r)
        for (int c = 0; c < d; ++c) {
            const double dv = train.data[static_cast<std::size_t>(r) * d + c] - st.mu[c];
            var[c] += dv * dv;
        }
    for (int c = 0; c < d; ++c) {
        const double sd = std::sqrt(var[c] / train.rows);
        st.inv_sd[c] = sd > 1e-12 ? 1.0 / sd : 1.0;
    }
    return st;
}

void check_features(const FeatureMatrix& f, const char* who) {
    if (f.rows <= 0) throw std::invalid_argument(std::string(who) + ": empty feature matrix");
    if (f.labels.size() != static_cast<std::size_t>(f.rows))
        throw std::invalid_argument(std::string(who) + ": labels missing or miscounted");
}

}  // namespace

double linear_probe(const FeatureMatrix& train, const FeatureMatrix& held_out,
                    const ProbeConfig& cfg, std::uint64_t seed) {
    check_features(train, "linear_probe");
    check_features(held_out, "linear_probe");
    if (train.dim != held_out.dim)
        throw std::invalid_argument("linear_probe: feature dimensions differ");
    if (cfg.epochs <= 0 || cfg.batch_size <= 0)
        throw std::invalid_argument("linear_probe: epochs and batch size must be positive");

    int n_classes = 0;
    for (int y : train.labels) n_classes = std::max(n_classes, y + 1);
    for (int y : held_out.labels) n_classes = std::max(n_classes, y + 1);
    {
        std::vector<char> seen(static_cast<std::size_t>(n_classes), 0);
        int distinct = 0;
        for (int y : train.labels)
            if (!seen[static_cast<std::size_t>(y)]) { seen[static_cast<std::size_t>(y)] = 1; ++distinct; }
        if (distinct < 2) throw std::invalid_argument("linear_probe: training split has one class");
    }

    const int d = train.dim;
    const Standardizer st = fit_standardizer(train);
    const std::vector<double> xtr = st.apply(train);
    const std::vector<double> xte = st.apply(held_out);

    std::vector<double> w(static_cast<std::size_t>(n_classes) * d, 0.0), b(n_classes, 0.0);
    std::vector<double> vw(w.size(), 0.0), vb(b.size(), 0.0);
    std::vector<double> gw(w.size()), gb(b.size()), logits(n_classes);

    const std::int64_t steps_per_epoch = (train.rows + cfg.batch_size - 1) / cfg.batch_size;
    const std::int64_t total_steps = steps_per_epoch * cfg.epochs;
    Rng rng = Rng(seed).fork("probe");
    std::vector<int> order(static_cast<std::size_t>(train.rows));
    std::iota(order.begin(), order.end(), 0);

    std::int64_t t = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        for (int first = 0; first < train.rows; first += cfg.batch_size) {
            const int m = std::min(cfg.batch_size, train.rows - first);
            const double lr = cfg.lr * 0.5 *
                              (1.0 + std::cos(M_PI * static_cast<double>(t) /
                                              static_cast<double>(total_steps)));
            ++t;
            std::fill(gw.begin(), gw.end(), 0.0);
            std::fill(gb.begin(), gb.end(), 0.0);
            for (int i = 0; i < m; ++i) {
                const int r = order[static_cast<std::size_t>(first + i)];
                const double* x = &xtr[static_cast<std::size_t>(r) * d];
                double zmax = -1e300;
                for (int k = 0; k < n_classes; ++k) {
                    double z = b[static_cast<std::size_t>(k)];
                    const double* wk = &w[static_cast<std::size_t>(k) * d];
                    for (int c = 0; c < d; ++c) z += wk[c] * x[c];
                    logits[static_cast<std::size_t>(k)] = z;
                    zmax = std::max(zmax, z);
                }
                double denom = 0.0;
                for (int k = 0; k < n_classes; ++k)
                    denom += std::exp(logits[static_cast<std::size_t>(k)] - zmax);
                for (int k = 0; k < n_classes; ++k) {
                    const double p = std::exp(logits[static_cast<std::size_t>(k)] - zmax) / denom;
                    const double delta = p - (k == train.labels[static_cast<std::size_t>(r)] ? 1.0 : 0.0);
                    gb[static_cast<std::size_t>(k)] += delta;
                    double* gwk = &gw[static_cast<std::size_t>(k) * d];
                    for (int c = 0; c < d; ++c) gwk[c] += delta * x[c];
                }
            }
            const double inv_m = 1.0 / m;
            for (std::size_t i = 0; i < w.size(); ++i) {
                vw[i] = cfg.momentum * vw[i] + gw[i] * inv_m;
                w[i] -= lr * vw[i];
            }
            for (std::size_t i = 0; i < b.size(); ++i) {
                vb[i] = cfg.momentum * vb[i] + gb[i] * inv_m;
                b[i] -= lr * vb[i];
            }
        }
    }

    int correct = 0;
    for (int r = 0; r < held_out.rows; ++r) {
        const double* x = &xte[static_cast<std::size_t>(r) * d];
        int best = 0;
        double best_z = -1e300;
        for (int k = 0; k < n_classes; ++k) {
            double z = b[static_cast<std::size_t>(k)];
            const double* wk = &w[static_cast<std::size_t>(k) * d];
            for (int c = 0; c < d; ++c) z += wk[c] * x[c];
            if (z > best_z) { best_z = z; best = k; }
        }
        if (best == held_out.labels[static_cast<std::size_t>(r)]) ++correct;
    }
    return static_cast<double>(correct) / held_out.rows;
}

// ---------------------------------------------------------------------------
// low-shot

FeatureMatrix stratified_subsample(const FeatureMatrix& f, double fraction, std::uint64_t seed) {
    check_features(f, "stratified_subsample");
    if (!(fraction > 0.0 && fraction <= 1.0))
        throw std::invalid_argument("stratified_subsample: fraction must lie in (0, 1]");

    std::map<int, std::vector<int>> by_class;
    for (int r = 0; r < f.rows; ++r) by_class[f.labels[static_cast<std::size_t>(r)]].push_back(r);

    Rng rng = Rng(seed).fork("lowshot");
    std::vector<char> keep(static_cast<std::size_t>(f.rows), 0);
    for (auto& [label, rows] : by_class) {
        (void)label;
        const int want = static_cast<int>(std::ceil(fraction * static_cast<double>(rows.size())));
        std::vector<int> shuffled = rows;
        rng.shuffle(shuffled);
        for (int i = 0; i < want; ++i) keep[static_cast<std::size_t>(shuffled[static_cast<std::size_t>(i)])] = 1;
    }

    FeatureMatrix out;
    out.dim = f.dim;
    for (int r = 0; r < f.rows; ++r) {
        if (!keep[static_cast<std::size_t>(r)]) continue;
        const double* src = &f.data[static_cast<std::size_t>(r) * f.dim];
        out.data.insert(out.data.end(), src, src + f.dim);
        out.labels.push_back(f.labels[static_cast<std::size_t>(r)]);
        ++out.rows;
    }
    return out;
}

double low_shot_eval(const ModelBundle& bundle, const Dataset& train, const Dataset& held_out,
                     double fraction, const ProbeConfig& cfg, std::uint64_t seed) {
    FeatureMatrix ftr = extract_features(bundle, train, cfg.source, WhichEncoder::student, cfg.last_k);
    FeatureMatrix fte =
        extract_features(bundle, held_out, cfg.source, WhichEncoder::student, cfg.last_k);
    FeatureMatrix sub = stratified_subsample(ftr, fraction, seed);
    return linear_probe(sub, fte, cfg, seed);
}

// ---------------------------------------------------------------------------
// collapse diagnostics

namespace {

// Cyclic Jacobi eigenvalue iteration on a symmetric matrix stored row-major;
// leaves (approximate) eigenvalues on the diagonal.
void jacobi_inplace(std::vector<double>& a, int n) {
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0, diag = 0.0;
        for (int i = 0; i < n; ++i) {
            diag += a[static_cast<std::size_t>(i) * n + i] * a[static_cast<std::size_t>(i) * n + i];
            for (int j = i + 1; j < n; ++j)
                off += a[static_cast<std::size_t>(i) * n + j] * a[static_cast<std::size_t>(i) * n + j];
        }
        if (off <= 1e-26 * std::max(1.0, diag)) break;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = a[static_cast<std::size_t>(p) * n + q];
                if (std::fabs(apq) < 1e-300) continue;
                const double theta = (a[static_cast<std::size_t>(q) * n + q] -
                                      a[static_cast<std::size_t>(p) * n + p]) /
                                     (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = a[static_cast<std::size_t>(k) * n + p];
                    const double akq = a[static_cast<std::size_t>(k) * n + q];
                    a[static_cast<std::size_t>(k) * n + p] = c * akp - s * akq;
                    a[static_cast<std::size_t>(k) * n + q] = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = a[static_cast<std::size_t>(p) * n + k];
                    const double aqk = a[static_cast<std::size_t>(q) * n + k];
                    a[static_cast<std::size_t>(p) * n + k] = c * apk - s * aqk;
                    a[static_cast<std::size_t>(q) * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
}

}  // namespace

RepresentationStats representation_stats(const FeatureMatrix& f) {
    if (f.rows < 2) throw std::invalid_argument("representation_stats: need at least 2 rows");
    const int n = f.rows, d = f.dim;
    RepresentationStats out;

    out.per_dim_std.assign(static_cast<std::size_t>(d), 0.0);
    std::vector<double> mu(static_cast<std::size_t>(d), 0.0);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < d; ++c) mu[c] += f.data[static_cast<std::size_t>(r) * d + c];
    for (int c = 0; c < d; ++c) mu[c] /= n;
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < d; ++c) {
            const double dv = f.data[static_cast<std::size_t>(r) * d + c] - mu[c];
            out.per_dim_std[c] += dv * dv;
        }
    for (int c = 0; c < d; ++c) out.per_dim_std[c] = std::sqrt(out.per_dim_std[c] / n);

    // Mean pairwise cosine from the squared norm of the summed unit rows:
    // sum_{i<j} u_i.u_j = (|sum u|^2 - sum |u_i|^2) / 2.
    std::vector<double> usum(static_cast<std::size_t>(d), 0.0);
    double unit_norm_total = 0.0;
    for (int r = 0; r < n; ++r) {
        const double* x = &f.data[static_cast<std::size_t>(r) * d];
        double nrm = 0.0;
        for (int c = 0; c < d; ++c) nrm += x[c] * x[c];
        nrm = std::sqrt(nrm);
        if (nrm > 0.0) {
            for (int c = 0; c < d; ++c) usum[c] += x[c] / nrm;
            unit_norm_total += 1.0;
        }
    }
    double sum_sq = 0.0;
    for (int c = 0; c < d; ++c) sum_sq += usum[c] * usum[c];
    out.mean_pairwise_cosine =
        (sum_sq - unit_norm_total) / (static_cast<double>(n) * (n - 1));

    // Effective rank from the singular values of the (uncentered) feature
    // matrix, via the Gram matrix on its smaller side.
    const int g = std::min(n, d);
    std::vector<double> gram(static_cast<std::size_t>(g) * g, 0.0);
    if (n <= d) {
        for (int i = 0; i < n; ++i)
            for (int j = i; j < n; ++j) {
                double acc = 0.0;
                for (int c = 0; c < d; ++c)
                    acc += f.data[static_cast<std::size_t>(i) * d + c] *
                           f.data[static_cast<std::size_t>(j) * d + c];
                gram[static_cast<std::size_t>(i) * g + j] = acc;
                gram[static_cast<std::size_t>(j) * g + i] = acc;
            }
    } else {
        for (int r = 0; r < n; ++r) {
            const double* x = &f.data[static_cast<std::size_t>(r) * d];
            for (int i = 0; i < d; ++i)
                for (int j = i; j < d; ++j) gram[static_cast<std::size_t>(i) * g + j] += x[i] * x[j];
        }
        for (int i = 0; i < d; ++i)
            for (int j = i + 1; j < d; ++j)
                gram[static_cast<std::size_t>(j) * g + i] = gram[static_cast<std::size_t>(i) * g + j];
    }
    jacobi_inplace(gram, g);
    std::vector<double> sv(static_cast<std::size_t>(g));
    double sv_sum = 0.0;
    for (int i = 0; i < g; ++i) {
        sv[static_cast<std::size_t>(i)] = std::sqrt(std::max(0.0, gram[static_cast<std::size_t>(i) * g + i]));
        sv_sum += sv[static_cast<std::size_t>(i)];
    }
    if (sv_sum <= 0.0) {
        out.effective_rank = 0.0;
    } else {
        double entropy = 0.0;
        for (int i = 0; i < g; ++i) {
            const double p = sv[static_cast<std::size_t>(i)] / sv_sum;
            if (p > 0.0) entropy -= p * std::log(p);
        }
        out.effective_rank = std::exp(entropy);
    }
    return out;
}

}  // namespace njepa
