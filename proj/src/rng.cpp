#include "njepa/rng.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace njepa {

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
    std::uint64_t z = x + 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

Rng::Rng(std::uint64_t seed) : seed_(seed), eng_(seed) {}

Rng Rng::fork(const std::string& name) const {
    return Rng(splitmix64(seed_ ^ fnv1a64(name)));
}

std::uint64_t Rng::next_u64() { return eng_(); }

double Rng::uniform01() {
    // 53 top bits -> double in [0, 1)
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
    if (lo > hi) throw std::invalid_argument("uniform_int: empty range");
    const std::uint64_t range = static_cast<std::uint64_t>(hi - lo) + 1;
    if (range == 0) {  // full 64-bit span
        return lo + static_cast<std::int64_t>(eng_());
    }
    std::uint64_t mask = range - 1;
    mask |= mask >> 1;
    mask |= mask >> 2;
    mask |= mask >> 4;
    mask |= mask >> 8;
    mask |= mask >> 16;
    mask |= mask >> 32;
    std::uint64_t x;
    do {
        x = eng_() & mask;
    } while (x >= range);
    return lo + static_cast<std::int64_t>(x);
}

double Rng::normal() {
    // Box-Muller, cosine branch only: two uniforms per draw, nothing cached,
    // so the engine call count per normal is fixed.
    const double u1 = 1.0 - uniform01();  // (0, 1], keeps log finite
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return r * std::cos(2.0 * 3.14159265358979323846 * u2);
}

double Rng::normal(double mu, double sigma) { return mu + sigma * normal(); }

std::string Rng::state_string() const {
    std::ostringstream os;
    os << eng_;
    return os.str();
}

void Rng::set_state(const std::string& s) {
    std::istringstream is(s);
    is >> eng_;
    if (is.fail()) throw std::runtime_error("rng: malformed state string");
}

}  // namespace njepa
