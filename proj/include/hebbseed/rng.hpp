#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace hebbseed {

// Counter-based PRNG (splitmix64 output function applied to seed + n*gamma).
// The full state is {seed, counter}, so a stream can be serialized and
// replayed exactly; the raw u64 stream is identical on every platform.
struct Rng {
    std::uint64_t seed = 0;
    std::uint64_t counter = 0;

    Rng() = default;
    explicit Rng(std::uint64_t s) : seed(s) {}

    static std::uint64_t mix64(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t next_u64() {
        ++counter;
        return mix64(seed + counter * 0x9e3779b97f4a7c15ULL);
    }

    // Independent substream; does not advance this stream.
    Rng derive(std::uint64_t stream_id) const {
        return Rng(mix64(seed ^ mix64(stream_id + 0x632be59bd9b4e019ULL)));
    }

    Rng derive(const std::string& tag) const {
        std::uint64_t h = 0xcbf29ce484222325ULL; // FNV-1a
        for (unsigned char c : tag) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        return derive(h);
    }

    // [0, 1) with 53-bit resolution
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller; consumes exactly two draws per call.
    double normal() {
        double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

    std::size_t uniform_index(std::size_t n) { return static_cast<std::size_t>(next_u64() % n); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = uniform_index(i);
            std::swap(v[i - 1], v[j]);
        }
    }
};

} // namespace hebbseed
