#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace downbeat {

// Seeded generator with explicit value mappings, so every draw is
// reproducible bit-for-bit regardless of the standard library's
// distribution implementations. Copyable; a copy replays the same stream.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    std::size_t uniform_index(std::size_t n) {
        return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[uniform_index(i)]);
        }
    }

    // Independent child stream, advanced from this one.
    Rng split() { return Rng(next_u64() ^ 0x9E3779B97F4A7C15ull); }

private:
    std::mt19937_64 gen_;
};

} // namespace downbeat
