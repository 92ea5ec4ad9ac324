#include "njepa/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include "njepa/rng.hpp"

namespace njepa {

namespace {

constexpr char kMagic[4] = {'N', 'J', 'P', 'C'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ofstream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_string(std::ofstream& os, const std::string& s) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename T>
T take(std::ifstream& is, const char* what) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error(std::string("checkpoint: truncated ") + what);
    return v;
}

std::string take_string(std::ifstream& is, const char* what) {
    const auto len = take<std::uint32_t>(is, what);
    std::string s(len, '\0');
    is.read(s.data(), static_cast<std::streamsize>(len));
    if (!is) throw std::runtime_error(std::string("checkpoint: truncated ") + what);
    return s;
}

void take_reals(std::ifstream& is, std::vector<real>& out, std::size_t n, const char* what) {
    out.resize(n);
    is.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(n * sizeof(real)));
    if (!is) throw std::runtime_error(std::string("checkpoint: truncated ") + what);
}

std::ifstream open_and_check_header(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) {
        throw std::runtime_error("checkpoint: bad magic in " + path);
    }
    const auto version = take<std::uint32_t>(is, "version");
    if (version != kVersion) {
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    }
    const auto dtype = take<std::uint8_t>(is, "dtype");
    if (dtype != sizeof(real)) {
        throw std::runtime_error("checkpoint: precision mismatch (file scalar is " +
                                 std::to_string(dtype) + " bytes, this build uses " +
                                 std::to_string(sizeof(real)) + ")");
    }
    return is;
}

}  // namespace

void write_checkpoint(const std::string& path, const CheckpointData& data) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot open for write: " + path);
    os.write(kMagic, 4);
    put<std::uint32_t>(os, kVersion);
    put<std::uint8_t>(os, static_cast<std::uint8_t>(sizeof(real)));
    put<std::uint64_t>(os, data.config_fingerprint);
    put<std::int64_t>(os, data.step);
    put<std::int64_t>(os, data.opt_step);
    put_string(os, data.config_text);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(data.rng_states.size()));
    for (const auto& [name, state] : data.rng_states) {
        put_string(os, name);
        put_string(os, state);
    }
    put<std::uint32_t>(os, static_cast<std::uint32_t>(data.entries.size()));
    for (const CheckpointEntry& e : data.entries) {
        put_string(os, e.name);
        put<std::uint32_t>(os, static_cast<std::uint32_t>(e.shape.size()));
        for (int d : e.shape) put<std::int32_t>(os, d);
        put<std::uint8_t>(os, e.has_moments ? 1 : 0);
        os.write(reinterpret_cast<const char*>(e.data.data()),
                 static_cast<std::streamsize>(e.data.size() * sizeof(real)));
        if (e.has_moments) {
            os.write(reinterpret_cast<const char*>(e.m.data()),
                     static_cast<std::streamsize>(e.m.size() * sizeof(real)));
            os.write(reinterpret_cast<const char*>(e.v.data()),
                     static_cast<std::streamsize>(e.v.size() * sizeof(real)));
        }
    }
    if (!os) throw std::runtime_error("checkpoint: write failed: " + path);
}

CheckpointData read_checkpoint(const std::string& path) {
    std::ifstream is = open_and_check_header(path);
    CheckpointData data;
    data.config_fingerprint = take<std::uint64_t>(is, "fingerprint");
    data.step = take<std::int64_t>(is, "step");
    data.opt_step = take<std::int64_t>(is, "optimizer step");
    data.config_text = take_string(is, "config");
    if (fnv1a64(data.config_text) != data.config_fingerprint) {
        throw std::runtime_error("checkpoint: config fingerprint mismatch in " + path);
    }
    const auto n_rng = take<std::uint32_t>(is, "rng count");
    for (std::uint32_t i = 0; i < n_rng; ++i) {
        std::string name = take_string(is, "rng name");
        std::string state = take_string(is, "rng state");
        data.rng_states.emplace_back(std::move(name), std::move(state));
    }
    const auto n_entries = take<std::uint32_t>(is, "entry count");
    for (std::uint32_t i = 0; i < n_entries; ++i) {
        CheckpointEntry e;
        e.name = take_string(is, "entry name");
        const auto ndim = take<std::uint32_t>(is, "entry rank");
        std::int64_t numel = 1;
        for (std::uint32_t d = 0; d < ndim; ++d) {
            const auto ext = take<std::int32_t>(is, "entry shape");
            if (ext <= 0) throw std::runtime_error("checkpoint: bad extent in " + e.name);
            e.shape.push_back(ext);
            numel *= ext;
        }
        e.has_moments = take<std::uint8_t>(is, "moment flag") != 0;
        take_reals(is, e.data, static_cast<std::size_t>(numel), "entry data");
        if (e.has_moments) {
            take_reals(is, e.m, static_cast<std::size_t>(numel), "entry moments");
            take_reals(is, e.v, static_cast<std::size_t>(numel), "entry moments");
        }
        data.entries.push_back(std::move(e));
    }
    return data;
}

std::string read_checkpoint_config(const std::string& path) {
    std::ifstream is = open_and_check_header(path);
    take<std::uint64_t>(is, "fingerprint");
    take<std::int64_t>(is, "step");
    take<std::int64_t>(is, "optimizer step");
    return take_string(is, "config");
}

}  // namespace njepa
