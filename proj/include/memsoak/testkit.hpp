#pragma once

// The 13 test kernels and the iteration protocol. Kernels stream the region
// in stripes (fill a stripe, verify it) so the working set stays cache-
// resident; each write/verify pass of a phase runs inside one kernel scope.
// Error counts only accumulate; a reported count never decreases due to a
// later event in the same iteration.

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "memsoak/device.hpp"
#include "memsoak/patterns.hpp"
#include "memsoak/rng.hpp"
#include "memsoak/test_codes.hpp"

namespace memsoak {

inline constexpr std::uint64_t kStripeWords = 64 * 1024;  // 256 KiB
inline constexpr std::uint64_t kRandomBlockWords = 256;
inline constexpr std::uint32_t kM20Rounds = 20;
inline constexpr std::uint64_t kLogicMaxLanes = 4096;
inline constexpr std::int64_t kIterationSeconds = 3;

struct TestOutcome {
    TestCode code;
    std::uint64_t word_errors = 0;
    std::uint32_t phases_run = 0;
};

struct M20Cursor {
    std::uint32_t next_round = 0;
};

namespace detail {

// One pattern phase: fill the whole region, read it all back. Striped so the
// verify hits cache; one kernel scope per phase.
template <class D>
std::uint64_t fill_verify_phase(D& dev, word write_pattern, word verify_pattern) {
    KernelScope ks(dev);
    std::uint64_t errs = 0;
    const std::uint64_t n = dev.words();
    for (addr_t b = 0; b < n; b += kStripeWords) {
        std::uint64_t c = std::min(kStripeWords, n - b);
        dev.fill_words(b, c, write_pattern);
        errs += dev.verify_fill(b, c, verify_pattern);
    }
    return errs;
}

template <class D>
std::uint64_t verify_region(D& dev, word pattern) {
    KernelScope ks(dev);
    std::uint64_t errs = 0;
    const std::uint64_t n = dev.words();
    for (addr_t b = 0; b < n; b += kStripeWords)
        errs += dev.verify_fill(b, std::min(kStripeWords, n - b), pattern);
    return errs;
}

template <class D>
void fill_region(D& dev, word pattern) {
    KernelScope ks(dev);
    const std::uint64_t n = dev.words();
    for (addr_t b = 0; b < n; b += kStripeWords)
        dev.fill_words(b, std::min(kStripeWords, n - b), pattern);
}

}  // namespace detail

template <class D>
TestOutcome run_constant_test(D& dev, TestCode code, word random_constant = 0) {
    word first;
    if (code == TestCode::mi10)
        first = 0x00000000u;
    else if (code == TestCode::mir)
        first = random_constant;
    else
        throw std::invalid_argument("constant test requires MI10 or MIR");
    TestOutcome out{code, 0, 2};
    out.word_errors += detail::fill_verify_phase(dev, first, first);
    out.word_errors += detail::fill_verify_phase(dev, ~first, ~first);
    return out;
}

template <class D>
TestOutcome run_walking_test(D& dev, TestCode code) {
    PatternTable table = walking_patterns(code);
    TestOutcome out{code, 0, static_cast<std::uint32_t>(table.size())};
    for (const PatternPhase& p : table)
        out.word_errors += detail::fill_verify_phase(dev, p.write_pattern, p.verify_pattern);
    return out;
}

// Random blocks: every 256-word block gets its own Park-Miller lane, one
// value per word. Verification regenerates the stream; both passes route the
// generator through the device ALU.
template <class D>
TestOutcome run_random_blocks(D& dev, std::uint64_t seed) {
    const std::uint64_t n = dev.words();
    TestOutcome out{TestCode::rb, 0, 2};
    std::vector<word> buf(std::min(n, kRandomBlockWords));
    auto generate = [&](std::uint64_t block, std::uint64_t count) {
        word state = static_cast<word>((seed + block) % (kParkMillerM - 1)) + 1;
        for (std::uint64_t i = 0; i < count; ++i) {
            state = dev.alu_result(park_miller_step(state));
            buf[i] = state;
        }
    };
    {
        KernelScope ks(dev);
        std::uint64_t block = 0;
        for (addr_t base = 0; base < n; base += kRandomBlockWords, ++block) {
            std::uint64_t c = std::min(kRandomBlockWords, n - base);
            generate(block, c);
            dev.write_words(base, std::span<const word>(buf.data(), c));
        }
    }
    {
        KernelScope ks(dev);
        std::uint64_t block = 0;
        for (addr_t base = 0; base < n; base += kRandomBlockWords, ++block) {
            std::uint64_t c = std::min(kRandomBlockWords, n - base);
            generate(block, c);
            out.word_errors += dev.verify_words(base, std::span<const word>(buf.data(), c));
        }
    }
    return out;
}

// Modulo-20 round: the pattern goes to offsets congruent to the round index,
// the complement is written twice everywhere else, and only the pattern class
// is verified. The write pass is a single kernel in ascending address order,
// so every class cell sits between full-distance bus transitions.
template <class D>
TestOutcome run_modulo20(D& dev, word pattern, std::span<const std::uint32_t> rounds) {
    const std::uint64_t n = dev.words();
    const word comp = ~pattern;
    TestOutcome out{TestCode::m20, 0, static_cast<std::uint32_t>(rounds.size())};
    for (std::uint32_t r : rounds) {
        if (r >= kM20Rounds) throw std::invalid_argument("modulo-20 round index out of range");
        {
            KernelScope ks(dev);
            addr_t next = 0;
            for (addr_t c = r; c < n; c += kM20Rounds) {
                if (c > next) {
                    dev.fill_words(next, c - next, comp);
                    dev.fill_words(next, c - next, comp);
                }
                dev.write_word(c, pattern);
                next = c + 1;
            }
            if (next < n) {
                dev.fill_words(next, n - next, comp);
                dev.fill_words(next, n - next, comp);
            }
        }
        {
            KernelScope ks(dev);
            for (addr_t c = r; c < n; c += kM20Rounds)
                out.word_errors += dev.verify_fill(c, 1, pattern);
        }
    }
    return out;
}

enum class LogicStorage { private_state, scratchpad };

inline TestCode logic_code(std::uint32_t multiplier, LogicStorage storage) {
    if (storage == LogicStorage::private_state)
        return multiplier == 1 ? TestCode::l : TestCode::l4;
    return multiplier == 1 ? TestCode::ls : TestCode::ls4;
}

// Logic test: each lane steps its own generator from zero and deposits the
// state into its region word after every complete k-step cycle; a clean run
// leaves the region all zero. In scratchpad mode every step round-trips the
// state through the scratchpad. When the device computes exactly (and the
// scratchpad stores exactly, if used) the generator provably returns to zero
// each cycle, so the kernel replays just the resulting device traffic.
template <class D>
TestOutcome run_logic(D& dev, const CyclicLcgSpec& spec, std::uint32_t multiplier,
                      LogicStorage storage, bool allow_exact_replay = true) {
    if (multiplier != 1 && multiplier != 4)
        throw std::invalid_argument("logic multiplier must be 1 or 4");
    const bool scratch = storage == LogicStorage::scratchpad;
    if (scratch && dev.caps().scratchpad_words < dev.caps().lane_count)
        throw std::invalid_argument("scratchpad storage requires scratchpad_words >= lane_count");
    const std::uint64_t lanes = std::min(dev.words(), kLogicMaxLanes);
    TestOutcome out{logic_code(multiplier, storage), 0, multiplier};
    detail::fill_region(dev, 0);
    const bool exact = allow_exact_replay && dev.alu_exact() && (!scratch || dev.scratch_exact());
    {
        KernelScope ks(dev);
        if (exact) {
            for (addr_t lane = 0; lane < lanes; ++lane)
                for (std::uint32_t cyc = 0; cyc < multiplier; ++cyc) dev.write_word(lane, 0);
        } else {
            const std::uint64_t slots = dev.caps().scratchpad_words;
            for (addr_t lane = 0; lane < lanes; ++lane) {
                const std::uint64_t slot = scratch ? lane % slots : 0;
                word x = 0;
                if (scratch) dev.scratch_store(slot, x);
                for (std::uint32_t cyc = 0; cyc < multiplier; ++cyc) {
                    for (std::uint32_t step = 0; step < spec.k; ++step) {
                        if (scratch) x = dev.scratch_load(slot);
                        x = dev.alu_mul_add(spec.a, x, spec.c);
                        if (scratch) dev.scratch_store(slot, x);
                    }
                    dev.write_word(lane, x);
                }
            }
        }
    }
    out.word_errors = detail::verify_region(dev, 0);
    return out;
}

struct IterationConfig {
    std::string card_id;
    std::uint32_t lcg_period = 512;
    std::uint64_t seed = 0;
    std::uint64_t iteration_index = 0;
    std::int64_t start_utc = 0;
    std::int32_t utc_offset_min = 0;
    std::int64_t duration_seconds = kIterationSeconds;
};

struct IterationRecord {
    std::int32_t schema_version = 1;
    std::string card_id;
    std::string device_name;
    std::string architecture;
    std::uint64_t region_mib = 0;
    std::uint32_t lcg_period = 0;
    std::uint32_t shader_clock_mhz = 0;
    std::uint32_t memory_clock_mhz = 0;
    std::int64_t start_utc = 0;
    std::int64_t end_utc = 0;
    std::int32_t utc_offset_min = 0;
    std::array<std::uint64_t, kTestCodeCount> errors{};
    bool failed = false;

    bool operator==(const IterationRecord&) const = default;
};

// One iteration: every test code once, with the two modulo-20 rounds selected
// by the cursor. Per-iteration constants (MIR pattern, RB seed, M20 pattern)
// derive from (seed, iteration_index) so replays match.
template <class D>
IterationRecord run_iteration(D& dev, const IterationConfig& cfg, M20Cursor& cursor) {
    const CyclicLcgSpec lcg = make_cyclic_lcg(cfg.lcg_period);
    IterationRecord rec;
    rec.card_id = cfg.card_id;
    rec.device_name = dev.caps().device_name;
    rec.architecture = to_string(dev.caps().architecture);
    rec.region_mib = dev.caps().region.mib();
    rec.lcg_period = cfg.lcg_period;
    rec.shader_clock_mhz = static_cast<std::uint32_t>(std::llround(dev.caps().shader_clock_mhz));
    rec.memory_clock_mhz = static_cast<std::uint32_t>(std::llround(dev.caps().memory_clock_mhz));
    rec.start_utc = cfg.start_utc;
    rec.end_utc = cfg.start_utc + cfg.duration_seconds;
    rec.utc_offset_min = cfg.utc_offset_min;

    auto put = [&rec](const TestOutcome& o) { rec.errors[index_of(o.code)] = o.word_errors; };
    put(run_constant_test(dev, TestCode::mi10));
    put(run_constant_test(dev, TestCode::mir,
                          static_cast<word>(mix64(cfg.seed, 0x4D4952u, cfg.iteration_index))));
    for (TestCode code : {TestCode::w1m, TestCode::w10, TestCode::w11, TestCode::w40, TestCode::w41})
        put(run_walking_test(dev, code));
    put(run_random_blocks(dev, mix64(cfg.seed, 0x5242u, cfg.iteration_index)));
    const std::array<std::uint32_t, 2> rounds{cursor.next_round,
                                              (cursor.next_round + 1) % kM20Rounds};
    put(run_modulo20(dev, static_cast<word>(mix64(cfg.seed, 0x4D3230u, cfg.iteration_index)),
                     rounds));
    cursor.next_round = (cursor.next_round + 2) % kM20Rounds;
    put(run_logic(dev, lcg, 1, LogicStorage::private_state));
    put(run_logic(dev, lcg, 4, LogicStorage::private_state));
    put(run_logic(dev, lcg, 1, LogicStorage::scratchpad));
    put(run_logic(dev, lcg, 4, LogicStorage::scratchpad));

    for (std::uint64_t e : rec.errors) rec.failed = rec.failed || e > 0;
    return rec;
}

}  // namespace memsoak
