#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace kbmap {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// xoshiro256** seeded through splitmix64. Hand-rolled so that streams are
// byte-reproducible across platforms and standard-library versions.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) {
        std::uint64_t sm = seed;
        for (auto& w : s_) w = splitmix64(sm);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform in [0, 1).
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n); n > 0.
    std::uint64_t next_below(std::uint64_t n) {
        // Rejection sampling to avoid modulo bias.
        std::uint64_t threshold = (0 - n) % n;
        while (true) {
            std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    double gaussian(double mean = 0.0, double stddev = 1.0) {
        if (has_spare_) {
            has_spare_ = false;
            return mean + stddev * spare_;
        }
        double u1 = 0.0;
        while (u1 == 0.0) u1 = next_double();
        double u2 = next_double();
        double mag = std::sqrt(-2.0 * std::log(u1));
        spare_ = mag * std::sin(2.0 * M_PI * u2);
        has_spare_ = true;
        return mean + stddev * mag * std::cos(2.0 * M_PI * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t s_[4];
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Independent stream for a (unit, index) pair; used so parallel sampling is
// deterministic regardless of worker count.
inline Rng substream(std::uint64_t seed, std::uint64_t unit, std::uint64_t index) {
    std::uint64_t mix = seed;
    splitmix64(mix);
    mix ^= 0x9E3779B97F4A7C15ULL * (unit + 1);
    splitmix64(mix);
    mix ^= 0xBF58476D1CE4E5B9ULL * (index + 1);
    return Rng(splitmix64(mix));
}

}  // namespace kbmap
