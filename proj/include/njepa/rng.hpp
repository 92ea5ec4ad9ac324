#pragma once

// Deterministic random source. One root stream per run; named substreams
// (masking, noise, init, data order) are forked from the root seed so that
// consumers never perturb each other's sequences. All distributions are
// hand-rolled on top of mt19937_64 so the draw sequence is fixed by this
// code, not by the standard library's unspecified algorithms.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace njepa {

std::uint64_t fnv1a64(const std::string& s);
std::uint64_t splitmix64(std::uint64_t x);

class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t seed() const { return seed_; }
    Rng fork(const std::string& name) const;

    std::uint64_t next_u64();
    double uniform01();                       // [0, 1)
    double uniform(double lo, double hi);     // [lo, hi)
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);  // [lo, hi] by rejection
    double normal();                          // standard normal, Box-Muller, no cached spare
    double normal(double mu, double sigma);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::int64_t i = static_cast<std::int64_t>(v.size()) - 1; i > 0; --i) {
            const std::int64_t j = uniform_int(0, i);
            std::swap(v[static_cast<std::size_t>(i)], v[static_cast<std::size_t>(j)]);
        }
    }

    // Engine state as text; round-trips exactly (checkpoint resume).
    std::string state_string() const;
    void set_state(const std::string& s);

private:
    std::uint64_t seed_;
    std::mt19937_64 eng_;
};

}  // namespace njepa
