#pragma once

// Memory-clock sweep: run full iterations against simulated devices across a
// clock grid, pooling error counts over seeds, and report each test's onset
// clock (lowest grid point with any pooled errors).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "memsoak/device.hpp"
#include "memsoak/faultsim.hpp"
#include "memsoak/rng.hpp"
#include "memsoak/test_codes.hpp"
#include "memsoak/testkit.hpp"

namespace memsoak {

inline std::vector<double> default_sweep_clocks() {
    return {400.0, 420.0, 430.0, 440.0, 450.0, 475.0, 500.0, 530.0};
}

struct SweepConfig {
    std::vector<double> clocks_mhz = default_sweep_clocks();
    std::uint64_t iterations_per_clock = 20;
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    std::uint64_t region_words = 32ull * 1024 * 1024 / 4;
    std::uint32_t lcg_period = 256;
    DeviceCapabilities base_caps;  // region and memory clock overridden per point
    FaultProfile profile;          // seed overridden per (seed, clock)

    void validate() const {
        if (clocks_mhz.empty()) throw std::invalid_argument("sweep needs clock points");
        for (double f : clocks_mhz)
            if (!(f > 0.0)) throw std::invalid_argument("clock points must be positive");
        if (iterations_per_clock == 0)
            throw std::invalid_argument("sweep needs at least one iteration per clock");
        if (seeds.empty()) throw std::invalid_argument("sweep needs at least one seed");
        profile.validate();
        make_cyclic_lcg(lcg_period);
    }
};

struct SweepPoint {
    double memory_clock_mhz = 0.0;
    std::uint64_t iterations = 0;  // pooled across seeds
    std::array<std::uint64_t, kTestCodeCount> total_errors{};
    std::array<double, kTestCodeCount> mean_errors{};
};

struct SweepResult {
    std::vector<SweepPoint> points;                  // ascending clock
    std::array<double, kTestCodeCount> onset_mhz{};  // +inf when a test never errs
};

inline SweepResult run_sweep(const SweepConfig& cfg) {
    cfg.validate();
    std::vector<double> clocks = cfg.clocks_mhz;
    std::sort(clocks.begin(), clocks.end());
    clocks.erase(std::unique(clocks.begin(), clocks.end()), clocks.end());

    SweepResult res;
    res.onset_mhz.fill(std::numeric_limits<double>::infinity());
    for (double f : clocks) {
        SweepPoint pt;
        pt.memory_clock_mhz = f;
        for (std::uint64_t seed : cfg.seeds) {
            DeviceCapabilities caps = cfg.base_caps;
            caps.region = RegionSpec::from_words(cfg.region_words);
            caps.memory_clock_mhz = f;
            FaultProfile profile = cfg.profile;
            profile.seed = mix64(seed, 0x73776565ull,
                                 static_cast<std::uint64_t>(std::llround(f * 1000.0)));
            SimDevice dev(caps, profile);

            IterationConfig icfg;
            icfg.card_id = "sweep";
            icfg.lcg_period = cfg.lcg_period;
            icfg.seed = seed;
            M20Cursor cursor;
            for (std::uint64_t it = 0; it < cfg.iterations_per_clock; ++it) {
                icfg.iteration_index = it;
                icfg.start_utc = static_cast<std::int64_t>(it) * kIterationSeconds;
                IterationRecord rec = run_iteration(dev, icfg, cursor);
                for (std::size_t t = 0; t < kTestCodeCount; ++t)
                    pt.total_errors[t] += rec.errors[t];
                ++pt.iterations;
            }
        }
        for (std::size_t t = 0; t < kTestCodeCount; ++t) {
            pt.mean_errors[t] = static_cast<double>(pt.total_errors[t]) /
                                static_cast<double>(pt.iterations);
            if (pt.total_errors[t] > 0 && std::isinf(res.onset_mhz[t]))
                res.onset_mhz[t] = f;
        }
        res.points.push_back(pt);
    }
    return res;
}

}  // namespace memsoak
