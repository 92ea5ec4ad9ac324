#include "njepa/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "njepa/rng.hpp"

namespace njepa {

namespace fs = std::filesystem;

int Dataset::n_classes() const {
    int k = 0;
    for (int l : labels) k = std::max(k, l + 1);
    return k;
}

Tensor Dataset::image(int i) const {
    if (i < 0 || i >= count()) throw std::out_of_range("dataset: image index " + std::to_string(i));
    const std::size_t n = pixels_per_image();
    std::vector<real> v(norm.begin() + static_cast<std::ptrdiff_t>(i * n),
                        norm.begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
    return Tensor::from_vector({channels, height, width}, std::move(v));
}

Tensor Dataset::image_batch(const std::vector<int>& ids) const {
    const std::size_t n = pixels_per_image();
    std::vector<real> v;
    v.reserve(ids.size() * n);
    for (int i : ids) {
        if (i < 0 || i >= count()) throw std::out_of_range("dataset: image index " + std::to_string(i));
        v.insert(v.end(), norm.begin() + static_cast<std::ptrdiff_t>(i * n),
                 norm.begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
    }
    return Tensor::from_vector({static_cast<int>(ids.size()), channels, height, width}, std::move(v));
}

void Dataset::renormalize() {
    if (static_cast<int>(mean.size()) != channels || static_cast<int>(stdev.size()) != channels) {
        throw std::logic_error("dataset: normalization constants missing");
    }
    norm.resize(raw.size());
    const std::size_t hw = static_cast<std::size_t>(height) * width;
    const int n = count();
    for (int i = 0; i < n; ++i) {
        for (int c = 0; c < channels; ++c) {
            const std::size_t base = (static_cast<std::size_t>(i) * channels + c) * hw;
            const double mu = mean[static_cast<std::size_t>(c)];
            const double sd = stdev[static_cast<std::size_t>(c)];
            for (std::size_t j = 0; j < hw; ++j) {
                norm[base + j] = static_cast<real>((static_cast<double>(raw[base + j]) - mu) / sd);
            }
        }
    }
}

static void compute_norm_constants(Dataset& d) {
    d.mean.assign(static_cast<std::size_t>(d.channels), 0.0);
    d.stdev.assign(static_cast<std::size_t>(d.channels), 1.0);
    const std::size_t hw = static_cast<std::size_t>(d.height) * d.width;
    const int n = d.count();
    if (n == 0) return;
    for (int c = 0; c < d.channels; ++c) {
        double s = 0, s2 = 0;
        for (int i = 0; i < n; ++i) {
            const std::size_t base = (static_cast<std::size_t>(i) * d.channels + c) * hw;
            for (std::size_t j = 0; j < hw; ++j) {
                const double v = d.raw[base + j];
                s += v;
                s2 += v * v;
            }
        }
        const double cnt = static_cast<double>(n) * static_cast<double>(hw);
        const double mu = s / cnt;
        const double var = std::max(s2 / cnt - mu * mu, 0.0);
        d.mean[static_cast<std::size_t>(c)] = mu;
        d.stdev[static_cast<std::size_t>(c)] = var > 1e-12 ? std::sqrt(var) : 1.0;
    }
}

Dataset make_synthetic(std::uint64_t seed, int n_per_class, int classes, int image_size) {
    if (classes < 2) throw std::invalid_argument("make_synthetic: need at least 2 classes");
    if (n_per_class < 1) throw std::invalid_argument("make_synthetic: need at least 1 image per class");
    Dataset d;
    d.height = d.width = image_size;
    d.channels = 3;
    d.has_labels = true;
    const int S = image_size;
    Rng rng = Rng(seed).fork("synthetic");
    d.raw.reserve(static_cast<std::size_t>(classes) * n_per_class * 3 * S * S);
    for (int k = 0; k < classes; ++k) {
        const double theta = 3.14159265358979323846 * k / classes;
        const double ct = std::cos(theta), st = std::sin(theta);
        for (int i = 0; i < n_per_class; ++i) {
            const double freq = rng.uniform(1.2, 2.6);              // cycles across the image
            // three-quarter-cycle phase jitter: class mean images keep real
            // structure, but a raw-pixel linear readout loses sign
            // consistency and stops being a near-perfect classifier
            const double phase = rng.uniform(0.0, 4.71238898038469);
            const double amp = rng.uniform(0.7, 1.0);
            double gain[3];
            for (double& g : gain) g = 1.0 + 0.08 * rng.normal();
            const double w = 2.0 * 3.14159265358979323846 * freq / S;
            for (int c = 0; c < 3; ++c) {
                for (int y = 0; y < S; ++y) {
                    for (int x = 0; x < S; ++x) {
                        const double base = std::sin(w * (x * ct + y * st) + phase);
                        const double v = amp * gain[c] * base + 0.15 * rng.normal();
                        d.raw.push_back(static_cast<float>(v));
                    }
                }
            }
            d.labels.push_back(k);
        }
    }
    compute_norm_constants(d);
    d.renormalize();
    return d;
}

// ---- container format ---------------------------------------------------------
// magic "NJPD" | u32 version | u32 count | u32 height | u32 width | u32 channels
// | u8 has_labels | f64 mean[C] | f64 std[C] | f32 pixels[count*C*H*W]
// | i32 labels[count] when has_labels. All little-endian.

namespace {

template <typename T>
void put(std::ofstream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::ifstream& is, const char* what) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error(std::string("dataset container: truncated ") + what);
    return v;
}

}  // namespace

void save_dataset(const Dataset& d, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("dataset: cannot open for write: " + path);
    os.write("NJPD", 4);
    put<std::uint32_t>(os, 1);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(d.count()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(d.height));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(d.width));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(d.channels));
    put<std::uint8_t>(os, d.has_labels ? 1 : 0);
    for (double m : d.mean) put(os, m);
    for (double s : d.stdev) put(os, s);
    os.write(reinterpret_cast<const char*>(d.raw.data()),
             static_cast<std::streamsize>(d.raw.size() * sizeof(float)));
    if (d.has_labels) {
        for (int l : d.labels) put<std::int32_t>(os, l);
    }
    if (!os) throw std::runtime_error("dataset: write failed: " + path);
}

static Dataset load_container(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("dataset: cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "NJPD", 4) != 0) {
        throw std::runtime_error("dataset container: bad magic in " + path);
    }
    const auto version = take<std::uint32_t>(is, "version");
    if (version != 1) {
        throw std::runtime_error("dataset container: unsupported version " + std::to_string(version));
    }
    Dataset d;
    const auto count = take<std::uint32_t>(is, "count");
    d.height = static_cast<int>(take<std::uint32_t>(is, "height"));
    d.width = static_cast<int>(take<std::uint32_t>(is, "width"));
    d.channels = static_cast<int>(take<std::uint32_t>(is, "channels"));
    if (d.height < 1 || d.width < 1 || d.channels < 1 || d.channels > 16) {
        throw std::runtime_error("dataset container: implausible dimensions");
    }
    d.has_labels = take<std::uint8_t>(is, "label flag") != 0;
    d.mean.resize(static_cast<std::size_t>(d.channels));
    d.stdev.resize(static_cast<std::size_t>(d.channels));
    for (double& m : d.mean) m = take<double>(is, "mean");
    for (double& s : d.stdev) s = take<double>(is, "std");
    d.raw.resize(static_cast<std::size_t>(count) * d.pixels_per_image());
    is.read(reinterpret_cast<char*>(d.raw.data()),
            static_cast<std::streamsize>(d.raw.size() * sizeof(float)));
    if (!is) throw std::runtime_error("dataset container: truncated pixel block");
    if (d.has_labels) {
        d.labels.resize(count);
        for (int& l : d.labels) l = take<std::int32_t>(is, "label");
    }
    d.renormalize();
    return d;
}

// Binary PPM: "P6" <ws> width <ws> height <ws> maxval <single ws> RGB bytes.
static void load_ppm(const fs::path& file, Dataset& d) {
    std::ifstream is(file, std::ios::binary);
    if (!is) throw std::runtime_error("ppm: cannot open " + file.string());
    std::string tag;
    is >> tag;
    if (tag != "P6") throw std::runtime_error("ppm: not a P6 file: " + file.string());
    auto next_int = [&is, &file]() {
        // skip whitespace and '#' comment lines
        int c = is.peek();
        while (is && (std::isspace(c) || c == '#')) {
            if (c == '#') {
                std::string line;
                std::getline(is, line);
            } else {
                is.get();
            }
            c = is.peek();
        }
        int v = 0;
        is >> v;
        if (!is) throw std::runtime_error("ppm: malformed header: " + file.string());
        return v;
    };
    const int w = next_int();
    const int h = next_int();
    const int maxval = next_int();
    if (maxval != 255) throw std::runtime_error("ppm: only maxval 255 supported: " + file.string());
    is.get();  // the single whitespace byte before pixel data
    std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h * 3);
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!is) throw std::runtime_error("ppm: truncated pixel data: " + file.string());
    if (d.count() == 0 && d.height == 0) {
        d.height = h;
        d.width = w;
        d.channels = 3;
    } else if (h != d.height || w != d.width) {
        throw std::runtime_error("ppm: inconsistent dimensions at " + file.string());
    }
    // interleaved RGB -> planar CHW in [0,1]
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    const std::size_t base = d.raw.size();
    d.raw.resize(base + 3 * hw);
    for (std::size_t p = 0; p < hw; ++p) {
        for (int c = 0; c < 3; ++c) {
            d.raw[base + static_cast<std::size_t>(c) * hw + p] =
                static_cast<float>(buf[p * 3 + static_cast<std::size_t>(c)]) / 255.0f;
        }
    }
}

static Dataset load_directory(const std::string& path) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(path)) {
        if (e.is_regular_file() && e.path().extension() == ".ppm") files.push_back(e.path());
    }
    if (files.empty()) throw std::runtime_error("dataset: no .ppm files in " + path);
    std::sort(files.begin(), files.end());
    Dataset d;
    bool all_labeled = true;
    std::vector<int> labels;
    for (const fs::path& f : files) {
        load_ppm(f, d);
        const std::string stem = f.stem().string();
        const std::size_t us = stem.find('_');
        int label = -1;
        if (us != std::string::npos && us > 0) {
            try {
                std::size_t used = 0;
                label = std::stoi(stem.substr(0, us), &used);
                if (used != us) label = -1;
            } catch (const std::exception&) {
                label = -1;
            }
        }
        if (label < 0) all_labeled = false;
        labels.push_back(label);
    }
    d.has_labels = all_labeled;
    if (all_labeled) d.labels = std::move(labels);
    compute_norm_constants(d);
    d.renormalize();
    return d;
}

Dataset load_dataset(const std::string& path) {
    if (fs::is_directory(path)) return load_directory(path);
    if (!fs::exists(path)) throw std::runtime_error("dataset: no such path: " + path);
    return load_container(path);
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& d, double val_frac, std::uint64_t seed) {
    if (val_frac < 0 || val_frac >= 1) throw std::invalid_argument("split: val_frac must be in [0,1)");
    std::vector<char> into_val(static_cast<std::size_t>(d.count()), 0);
    if (val_frac > 0) {
        // stratified by label (single stratum when unlabeled)
        const int k = d.has_labels ? d.n_classes() : 1;
        Rng rng = Rng(seed).fork("split");
        for (int cls = 0; cls < k; ++cls) {
            std::vector<int> ids;
            for (int i = 0; i < d.count(); ++i) {
                if (!d.has_labels || d.labels[static_cast<std::size_t>(i)] == cls) ids.push_back(i);
            }
            rng.shuffle(ids);
            const int take_n = static_cast<int>(std::ceil(val_frac * static_cast<double>(ids.size())));
            for (int j = 0; j < take_n && j < static_cast<int>(ids.size()); ++j) {
                into_val[static_cast<std::size_t>(ids[static_cast<std::size_t>(j)])] = 1;
            }
        }
    }
    Dataset train, val;
    for (Dataset* part : {&train, &val}) {
        part->height = d.height;
        part->width = d.width;
        part->channels = d.channels;
        part->has_labels = d.has_labels;
        part->mean = d.mean;
        part->stdev = d.stdev;
    }
    train.split = "train";
    val.split = "val";
    const std::size_t n = d.pixels_per_image();
    for (int i = 0; i < d.count(); ++i) {
        Dataset& dst = into_val[static_cast<std::size_t>(i)] ? val : train;
        dst.raw.insert(dst.raw.end(), d.raw.begin() + static_cast<std::ptrdiff_t>(i * n),
                       d.raw.begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
        if (d.has_labels) dst.labels.push_back(d.labels[static_cast<std::size_t>(i)]);
    }
    train.renormalize();
    val.renormalize();
    return {std::move(train), std::move(val)};
}

}  // namespace njepa
