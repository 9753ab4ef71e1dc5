#pragma once

#include <cmath>
#include <cstdint>

namespace ehat {

// Counter-based deterministic random stream. A draw is a pure function of
// (seed, counter), so identical state yields identical sequences across
// runs and machines with IEEE-754 doubles. Substreams derived from ids are
// statistically independent of each other and of the parent.
class RngStream {
public:
    RngStream() = default;
    explicit RngStream(std::uint64_t seed, std::uint64_t counter = 0)
        : seed_(seed), counter_(counter) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t counter() const { return counter_; }

    std::uint64_t next_u64() {
        std::uint64_t z = seed_ + 0x9e3779b97f4a7c15ULL * ++counter_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 random mantissa bits.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller (one value per call; second is dropped
    // to keep the draw count predictable).
    double normal() {
        double u1 = static_cast<double>((next_u64() >> 11) | 1ULL) * 0x1.0p-53;
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    // Integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

    // Independent child stream. Forks with distinct ids never collide with
    // each other or with draws from this stream.
    RngStream substream(std::uint64_t id) const {
        std::uint64_t z = seed_ ^ (0xd1b54a32d192ed03ULL * (id + 0x632be59bd9b4e019ULL));
        z = (z ^ (z >> 29)) * 0xff51afd7ed558ccdULL;
        z = (z ^ (z >> 32)) * 0xc4ceb9fe1a85ec53ULL;
        return RngStream(z ^ (z >> 29));
    }

private:
    std::uint64_t seed_ = 0;
    std::uint64_t counter_ = 0;
};

} // namespace ehat
