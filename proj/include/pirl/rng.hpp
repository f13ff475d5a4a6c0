#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "pirl/common.hpp"

namespace pirl {

// Deterministic random source. std::mt19937_64 is bit-stable across
// platforms; the value transforms below are implemented by hand because the
// standard distributions are not guaranteed to produce identical streams
// between library versions, and reproducibility is a hard contract here.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    int uniform_int(int lo, int hi) {  // inclusive bounds
        return lo + static_cast<int>(uniform() * static_cast<double>(hi - lo + 1));
    }

    // Box-Muller; the sine branch is discarded to keep the stream stateless.
    double normal(double mean = 0.0, double stddev = 1.0) {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
        return mean + stddev * z;
    }

    // Rejection-sampled truncated normal; falls back to clamping after a
    // bounded number of attempts so the draw count stays finite.
    double truncated_normal(double mean, double stddev, double lo, double hi) {
        for (int i = 0; i < 64; ++i) {
            double z = normal(mean, stddev);
            if (z >= lo && z <= hi) return z;
        }
        return clampd(mean, lo, hi);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform() * static_cast<double>(i));
            if (j >= i) j = i - 1;
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    static constexpr double kPi = 3.14159265358979323846;
    std::mt19937_64 eng_;
};

// Derives a child seed so that independent subsystems (traffic spawning,
// action sampling, training shuffles) never share a stream.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t h = seed ^ (0x9e3779b97f4a7c15ull + stream);
    h ^= h >> 30;
    h *= 0xbf58476d1ce4e5b9ull;
    h ^= h >> 27;
    h *= 0x94d049bb133111ebull;
    h ^= h >> 31;
    return h;
}

}  // namespace pirl
