#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace cpart {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& s) {
    s += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = s;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace detail

// Deterministic counter-based random stream (xoshiro256** core seeded via
// splitmix64). Substreams are derived from the master seed and a stream id,
// not from consumed state, so parallel workers get reproducible streams
// regardless of scheduling.
class Rng {
  public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
        : seed_(seed), stream_(stream) {
        std::uint64_t s = seed ^ (0xD1B54A32D192ED03ULL * (stream + 1));
        for (auto& w : state_) w = detail::splitmix64(s);
    }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }

    // Substream `id` of this stream's seed; the scheme is
    // child = Rng(seed, mix(stream, id)).
    Rng substream(std::uint64_t id) const {
        std::uint64_t m = stream_ * 0x9E3779B97F4A7C15ULL + id + 1;
        return Rng(seed_, m);
    }

    std::uint64_t bits() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // uniform on [0, 1) with 53 random bits
    double uniform() { return static_cast<double>(bits() >> 11) * 0x1.0p-53; }

    // uniform on (0, 1)
    double uniform_pos() {
        double u;
        do { u = uniform(); } while (u == 0.0);
        return u;
    }

    // uniform integer on {0, ..., n-1}
    int uniform_int(int n) {
        if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
        // rejection to avoid modulo bias
        const std::uint64_t un = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
        std::uint64_t r;
        do { r = bits(); } while (r >= limit);
        return static_cast<int>(r % un);
    }

    double exponential() { return -std::log(uniform_pos()); }

    double normal() {
        // Box-Muller, no caching (keeps the stream position deterministic
        // per call site)
        const double u1 = uniform_pos();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

  private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t state_[4];
};

}  // namespace cpart
