#pragma once

// Counter-based deterministic random streams. Every stochastic event in the
// simulator is a pure function of (seed, stream tag, counter, salt), so replays
// and resharded runs produce identical event sequences.

#include <cmath>
#include <cstdint>

namespace memsoak {

// SplitMix64 finalizer. Full-avalanche: every input bit affects every output bit.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

constexpr std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
    return mix64(mix64(a) ^ b);
}

constexpr std::uint64_t mix64(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    return mix64(mix64(mix64(a) ^ b) ^ c);
}

constexpr std::uint64_t mix64(std::uint64_t a, std::uint64_t b, std::uint64_t c,
                              std::uint64_t d) {
    return mix64(mix64(mix64(mix64(a) ^ b) ^ c) ^ d);
}

// Uniform double in [0, 1), 53 mantissa bits.
constexpr double to_unit(std::uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// Uniform integer in [0, n) without modulo bias (Lemire reduction).
constexpr std::uint64_t to_range(std::uint64_t bits, std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(bits) * n) >> 64);
}

// One keyed stream: draws advance an internal counter. Streams with distinct
// (seed, tag) pairs are independent regardless of interleaving.
class RandomStream {
  public:
    RandomStream() = default;
    RandomStream(std::uint64_t seed, std::uint64_t tag) : key_(mix64(seed, tag)) {}

    std::uint64_t next() { return mix64(key_, counter_++); }
    std::uint64_t next(std::uint64_t salt) { return mix64(key_, counter_++, salt); }

    double next_unit() { return to_unit(next()); }
    std::uint64_t next_range(std::uint64_t n) { return to_range(next(), n); }

    // Standard normal via Box-Muller; consumes two draws.
    double next_normal() {
        double u1 = to_unit(next() | 1u);  // keep away from exact zero
        double u2 = next_unit();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(6.283185307179586476925286766559 * u2);
    }

    // Poisson by product of uniforms; mean is split so the running product
    // stays inside double range.
    std::uint64_t next_poisson(double mean) {
        std::uint64_t total = 0;
        while (mean > 500.0) {
            total += poisson_once(500.0);
            mean -= 500.0;
        }
        return total + poisson_once(mean);
    }

    std::uint64_t counter() const { return counter_; }

  private:
    std::uint64_t poisson_once(double mean) {
        if (mean <= 0.0) return 0;
        const double limit = std::exp(-mean);
        double prod = 1.0;
        std::uint64_t n = 0;
        while (true) {
            prod *= next_unit();
            if (prod <= limit) return n;
            ++n;
        }
    }

    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
};

}  // namespace memsoak
