#pragma once

// Deterministic pattern generators: the Park-Miller PRNG behind the random
// blocks test, the short-period cyclic LCG behind the logic tests, and the
// phase tables for the walking-bit tests.

#include <bit>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "memsoak/device.hpp"
#include "memsoak/test_codes.hpp"

namespace memsoak {

// Park-Miller minimal standard: x' = 16807 x mod (2^31 - 1). The modulus is
// Mersenne, so reduction folds instead of dividing.
inline constexpr std::uint64_t kParkMillerA = 16807;
inline constexpr std::uint64_t kParkMillerM = (1ull << 31) - 1;

constexpr word park_miller_step(word x) {
    std::uint64_t v = kParkMillerA * static_cast<std::uint64_t>(x);
    v = (v & kParkMillerM) + (v >> 31);   // v < 2^45 -> one fold leaves <= 2^31 + 2^14
    v = (v & kParkMillerM) + (v >> 31);
    return static_cast<word>(v == kParkMillerM ? 0 : v);
}

class ParkMiller {
  public:
    explicit ParkMiller(word seed) : x_(seed) {
        if (seed == 0 || seed % kParkMillerM == 0)
            throw std::invalid_argument("Park-Miller seed must be in [1, 2^31 - 2]");
    }

    // Maps an arbitrary 64-bit value into the valid seed range.
    static word seed_from(std::uint64_t raw) {
        return static_cast<word>(raw % (kParkMillerM - 1)) + 1;
    }

    word next() { return x_ = park_miller_step(x_); }
    word state() const { return x_; }

  private:
    word x_;
};

// Cyclic LCG: x <- (a x + c) mod 2^32 with c a multiple of 2^(32 - log2 k).
// The orbit of 0 stays inside the multiples of c's power-of-two factor, where
// the induced map is a full-period Hull-Dobell LCG mod k: the orbit has exact
// period k, so k clean steps from any orbit point land back on it, and any
// corruption of the low 32 - log2 k bits leaves the orbit permanently.
struct CyclicLcgSpec {
    std::uint32_t k = 0;
    word a = 0;
    word c = 0;

    word step(word x) const { return a * x + c; }
};

inline CyclicLcgSpec make_cyclic_lcg(std::uint32_t k) {
    if (k < 4 || k > (1u << 16) || !std::has_single_bit(k))
        throw std::invalid_argument("cyclic LCG period must be a power of two in [4, 65536]");
    CyclicLcgSpec spec{k, 1664525u, static_cast<word>(1ull << (32 - std::countr_zero(k)))};

    // The construction guarantees exact period k; enumerate anyway so a bad
    // edit here can never ship a generator that misses states.
    std::vector<bool> seen(k, false);
    word x = 0;
    for (std::uint32_t i = 0; i < k; ++i) {
        if (x % spec.c != 0) throw std::logic_error("cyclic LCG left its lattice");
        std::uint32_t slot = x / spec.c;
        if (seen[slot]) throw std::logic_error("cyclic LCG orbit shorter than k");
        seen[slot] = true;
        x = spec.step(x);
    }
    if (x != 0) throw std::logic_error("cyclic LCG orbit did not close at k");
    return spec;
}

// Walking-test phase tables. Verification always checks exactly what the
// phase wrote.
struct PatternPhase {
    word write_pattern;
    word verify_pattern;
};

using PatternTable = std::vector<PatternPhase>;

inline PatternTable walking_patterns(TestCode code) {
    auto phase = [](word w) { return PatternPhase{w, w}; };
    PatternTable t;
    switch (code) {
        case TestCode::w11:
            for (int s = 0; s < 8; ++s) t.push_back(phase(0x01010101u << s));
            break;
        case TestCode::w10:
            for (int s = 0; s < 8; ++s) t.push_back(phase(~(0x01010101u << s)));
            break;
        case TestCode::w1m:
            for (int s = 0; s < 8; ++s) {
                t.push_back(phase(0x01010101u << s));
                t.push_back(phase(~(0x01010101u << s)));
            }
            break;
        case TestCode::w41:
            for (int s = 0; s < 32; ++s) t.push_back(phase(1u << s));
            break;
        case TestCode::w40:
            for (int s = 0; s < 32; ++s) t.push_back(phase(~(1u << s)));
            break;
        default:
            throw std::invalid_argument(std::string("no walking table for ") + to_string(code));
    }
    return t;
}

}  // namespace memsoak
