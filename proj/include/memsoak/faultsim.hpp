#pragma once

// Simulated memory device: a backing store plus parameterized fault models
// (stuck-at cells, transient flips, coupling between neighbors, clock-
// overdrive timing faults, flaky ALU) and a virtual clock. Every stochastic
// event is a pure function of the profile seed and per-stream counters, so
// runs replay exactly.
//
// The overdrive model is transition-sensitive: it keys off the Hamming
// distance h between consecutive values on the device's write stream, not
// off cell contents. The stream resets at top-level kernel boundaries. A
// kernel that streams one constant therefore produces h = 0 everywhere and
// can never take an overdrive hit, while kernels that interleave a pattern
// with its complement expose h = 32 transitions at every boundary. Fired
// flips land on the word being stored.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "memsoak/device.hpp"
#include "memsoak/rng.hpp"

namespace memsoak {

struct StuckAtFault {
    addr_t address = 0;
    word mask = 0;         // bits forced
    word stuck_value = 0;  // values they are forced to
};

struct CouplingSpec {
    std::uint64_t row_length_words = 1024;
    std::vector<std::int64_t> victim_offsets{-1, 1};
    double p_couple = 0.0;
};

// The one coupling semantic this simulator implements; config files carry it
// as a tag so future modes stay distinguishable.
inline constexpr const char* kCouplingModeName =
    "flip-victim-bit-on-differing-aggressor-write";

struct OverdriveSpec {
    double f0_mhz = 405.0;  // onset threshold
    double alpha = 0.0;     // 0 disables the model
    double gamma = 3.0;
};

// Sweep-calibrated constants: with these, the transition-sensitive tests land
// in the 1e-7..1e-4 word-error-rate decade across a 420..530 MHz sweep.
inline OverdriveSpec tuned_overdrive() { return OverdriveSpec{405.0, 5e-11, 3.0}; }

struct FaultProfile {
    std::vector<StuckAtFault> stuck_at;
    double transient_rate_lambda = 0.0;  // expected errors per bit-hour
    CouplingSpec coupling;
    OverdriveSpec overdrive;
    double alu_fault_p = 0.0;  // per-op chance of a one-bit result flip
    std::shared_ptr<const FaultProfile> scratchpad_profile;
    std::uint64_t seed = 0;

    void validate() const {
        auto prob = [](double p, const char* what) {
            if (!(p >= 0.0 && p <= 1.0))
                throw std::invalid_argument(std::string(what) + " must be in [0, 1]");
        };
        prob(coupling.p_couple, "p_couple");
        prob(alu_fault_p, "alu_fault_p");
        if (transient_rate_lambda < 0.0)
            throw std::invalid_argument("transient_rate_lambda must be >= 0");
        if (coupling.row_length_words < 1)
            throw std::invalid_argument("row_length_words must be >= 1");
        if (overdrive.alpha < 0.0) throw std::invalid_argument("alpha must be >= 0");
        if (overdrive.gamma < 1.0) throw std::invalid_argument("gamma must be >= 1");
        if (scratchpad_profile) scratchpad_profile->validate();
    }
};

struct VirtualClock {
    double now_seconds = 0.0;
    double tau_read_ns = 2.0;   // per word at the 400 MHz baseline
    double tau_write_ns = 2.0;
    double clock_mhz = 400.0;

    void advance_reads(std::uint64_t words) {
        now_seconds += static_cast<double>(words) * tau_read_ns * 1e-9 * (400.0 / clock_mhz);
    }
    void advance_writes(std::uint64_t words) {
        now_seconds += static_cast<double>(words) * tau_write_ns * 1e-9 * (400.0 / clock_mhz);
    }
};

enum class FaultKind : std::uint8_t { stuck_at, transient, coupling, overdrive, alu };
inline constexpr std::size_t kFaultKindCount = 5;

struct FaultEvent {
    FaultKind kind;
    addr_t address;  // word address; 0 for ALU events
    std::uint8_t bit;
    double virtual_time;
    std::uint64_t op_counter;

    bool operator==(const FaultEvent&) const = default;
};

class SimDevice final : public MemoryDevice {
  public:
    SimDevice(DeviceCapabilities caps, FaultProfile profile)
        : MemoryDevice(std::move(caps)),
          profile_(std::move(profile)),
          storage_(words(), 0u),
          od_stream_(profile_.seed, 0x6F766572u),
          coupling_stream_(profile_.seed, 0x636F7570u),
          transient_stream_(profile_.seed, 0x7472616Eu),
          alu_stream_(profile_.seed, 0x616C7520u) {
        profile_.validate();
        for (const auto& f : profile_.stuck_at)
            if (f.address >= words())
                throw std::out_of_range("stuck-at fault at " + std::to_string(f.address) +
                                        " outside region");
        stuck_ = profile_.stuck_at;
        std::sort(stuck_.begin(), stuck_.end(),
                  [](const StuckAtFault& a, const StuckAtFault& b) { return a.address < b.address; });
        clock_.clock_mhz = caps_.memory_clock_mhz;
        od_base_ = profile_.overdrive.alpha *
                   std::pow(std::max(0.0, caps_.memory_clock_mhz - profile_.overdrive.f0_mhz),
                            profile_.overdrive.gamma);
        coupling_active_ = profile_.coupling.p_couple > 0.0;
        transients_active_ = profile_.transient_rate_lambda > 0.0;
        if (profile_.scratchpad_profile && caps_.scratchpad_words > 0) {
            DeviceCapabilities sc;
            sc.region = RegionSpec::from_words(caps_.scratchpad_words);
            sc.lane_count = 1;
            sc.scratchpad_words = 0;
            sc.device_name = caps_.device_name + "/scratch";
            sc.architecture = caps_.architecture;
            sc.shader_clock_mhz = caps_.shader_clock_mhz;
            sc.memory_clock_mhz = caps_.memory_clock_mhz;
            FaultProfile sp = *profile_.scratchpad_profile;
            if (sp.seed == 0) sp.seed = mix64(profile_.seed, 0x73637261u);
            scratch_sim_ = std::make_unique<SimDevice>(std::move(sc), std::move(sp));
        } else {
            scratch_plain_.assign(caps_.scratchpad_words, 0u);
        }
    }

    void begin_kernel() override {
        if (depth_++ == 0) {
            have_prev_beat_ = false;
            if (scratch_sim_) scratch_sim_->begin_kernel();
        }
    }
    void end_kernel() override {
        if (depth_ == 0) throw std::logic_error("end_kernel without begin_kernel");
        if (--depth_ == 0 && scratch_sim_) scratch_sim_->end_kernel();
    }

    void write_words(addr_t base, std::span<const word> values) override {
        check_range(base, values.size());
        clock_.advance_writes(values.size());
        if (od_base_ > 0.0 || coupling_active_) {
            for (std::size_t i = 0; i < values.size(); ++i) store_one(base + i, values[i]);
            return;
        }
        std::copy(values.begin(), values.end(), storage_.begin() + base);
        apply_stuck_range(base, values.size());
    }

    void fill_words(addr_t base, std::uint64_t count, word value) override {
        check_range(base, count);
        if (count == 0) return;
        clock_.advance_writes(count);
        if (coupling_active_) {
            // Per-word path: coupling needs every old-vs-new comparison.
            for (std::uint64_t i = 0; i < count; ++i) store_one(base + i, value);
            return;
        }
        // A constant run has h = 0 everywhere except its first beat, so the
        // overdrive model needs at most one draw for the whole run.
        bool od_fired = false;
        word od_bit = 0;
        if (od_base_ > 0.0) {
            if (have_prev_beat_ && prev_beat_ != value) {
                int h = std::popcount(prev_beat_ ^ value);
                std::uint64_t r = od_stream_.next(base);
                if (to_unit(r) < od_base_ * h * (1.0 / 32.0)) {
                    od_fired = true;
                    od_bit = static_cast<word>(od_stream_.next(base) & 31);
                }
            }
            prev_beat_ = value;
            have_prev_beat_ = true;
        }
        std::fill_n(storage_.begin() + base, count, value);
        apply_stuck_range(base, count);
        if (od_fired) {
            storage_[base] ^= (1u << od_bit);
            record_event(FaultKind::overdrive, base, od_bit, od_stream_.counter());
        }
    }

    void read_words(addr_t base, std::span<word> out) override {
        check_range(base, out.size());
        sync_transients();
        clock_.advance_reads(out.size());
        std::copy_n(storage_.begin() + base, out.size(), out.begin());
        for_stuck_in(base, out.size(), [&](const StuckAtFault& f) {
            out[f.address - base] = stuck_read(f, out[f.address - base]);
        });
    }

    std::uint64_t verify_fill(addr_t base, std::uint64_t count, word value) override {
        check_range(base, count);
        sync_transients();
        clock_.advance_reads(count);
        const word* p = storage_.data() + base;
        std::uint64_t m = 0;
        for (std::uint64_t i = 0; i < count; ++i) m += (p[i] != value);
        for_stuck_in(base, count, [&](const StuckAtFault& f) {
            word raw = storage_[f.address];
            m += (stuck_read(f, raw) != value);
            m -= (raw != value);
        });
        return m;
    }

    std::uint64_t verify_words(addr_t base, std::span<const word> expected) override {
        check_range(base, expected.size());
        sync_transients();
        clock_.advance_reads(expected.size());
        const word* p = storage_.data() + base;
        std::uint64_t m = 0;
        for (std::size_t i = 0; i < expected.size(); ++i) m += (p[i] != expected[i]);
        for_stuck_in(base, expected.size(), [&](const StuckAtFault& f) {
            word raw = storage_[f.address];
            word exp = expected[f.address - base];
            m += (stuck_read(f, raw) != exp);
            m -= (raw != exp);
        });
        return m;
    }

    word alu_result(word exact) override {
        if (profile_.alu_fault_p == 0.0) return exact;
        std::uint64_t r = alu_stream_.next();
        if (to_unit(r) >= profile_.alu_fault_p) return exact;
        word bit = static_cast<word>(alu_stream_.next() & 31);
        record_event(FaultKind::alu, 0, bit, alu_stream_.counter());
        return exact ^ (1u << bit);
    }
    bool alu_exact() const override { return profile_.alu_fault_p == 0.0; }

    word scratch_load(std::uint64_t slot) override {
        check_slot(slot);
        if (!scratch_sim_) return scratch_plain_[slot];
        return scratch_sim_->read_word(slot);
    }
    void scratch_store(std::uint64_t slot, word value) override {
        check_slot(slot);
        if (!scratch_sim_) {
            scratch_plain_[slot] = value;
            return;
        }
        scratch_sim_->write_word(slot, value);
    }
    bool scratch_exact() const override { return scratch_sim_ == nullptr; }

    // Advance the clock without traffic (duty-cycle gaps); pending transient
    // flips materialize at the next read.
    void idle(double seconds) {
        if (seconds < 0.0) throw std::invalid_argument("idle time must be >= 0");
        clock_.now_seconds += seconds;
    }

    const VirtualClock& clock() const { return clock_; }
    const FaultProfile& profile() const { return profile_; }
    std::span<const word> image() const { return storage_; }
    SimDevice* scratch_device() { return scratch_sim_.get(); }

    std::uint64_t event_count(FaultKind k) const {
        return counts_[static_cast<std::size_t>(k)];
    }
    std::uint64_t total_event_count() const {
        std::uint64_t t = 0;
        for (auto c : counts_) t += c;
        return t;
    }
    void set_event_log(bool on) { log_events_ = on; }
    const std::vector<FaultEvent>& events() const { return events_; }
    void clear_events() { events_.clear(); }

  private:
    static word stuck_store(const StuckAtFault& f, word v) {
        return (v & ~f.mask) | (f.stuck_value & f.mask);
    }
    // Stuck bits override whatever later models scribbled on the cell.
    static word stuck_read(const StuckAtFault& f, word stored) {
        return stuck_store(f, stored);
    }

    template <class F>
    void for_stuck_in(addr_t base, std::uint64_t count, F&& fn) const {
        if (stuck_.empty()) return;
        auto it = std::lower_bound(
            stuck_.begin(), stuck_.end(), base,
            [](const StuckAtFault& f, addr_t a) { return f.address < a; });
        for (; it != stuck_.end() && it->address < base + count; ++it) fn(*it);
    }

    void apply_stuck_range(addr_t base, std::uint64_t count) {
        for_stuck_in(base, count, [&](const StuckAtFault& f) {
            word intended = storage_[f.address];
            word stored = stuck_store(f, intended);
            if (stored != intended) {
                storage_[f.address] = stored;
                record_event(FaultKind::stuck_at, f.address,
                             static_cast<std::uint8_t>(std::countr_zero(intended ^ stored)), 0);
            }
        });
    }

    void store_one(addr_t a, word v) {
        bool od_fired = false;
        word od_bit = 0;
        if (od_base_ > 0.0) {
            if (have_prev_beat_ && prev_beat_ != v) {
                int h = std::popcount(prev_beat_ ^ v);
                std::uint64_t r = od_stream_.next(a);
                if (to_unit(r) < od_base_ * h * (1.0 / 32.0)) {
                    od_fired = true;
                    od_bit = static_cast<word>(od_stream_.next(a) & 31);
                }
            }
            prev_beat_ = v;
            have_prev_beat_ = true;
        }
        word old_stored = storage_[a];
        word stored = v;
        for_stuck_in(a, 1, [&](const StuckAtFault& f) {
            stored = stuck_store(f, stored);
            if (stored != v)
                record_event(FaultKind::stuck_at, a,
                             static_cast<std::uint8_t>(std::countr_zero(v ^ stored)), 0);
        });
        if (od_fired) {
            stored ^= (1u << od_bit);
            record_event(FaultKind::overdrive, a, od_bit, od_stream_.counter());
        }
        storage_[a] = stored;
        if (coupling_active_ && (old_stored ^ v) != 0) {
            word changed = old_stored ^ v;
            std::uint64_t row = a / profile_.coupling.row_length_words;
            for (std::int64_t d : profile_.coupling.victim_offsets) {
                std::int64_t va = static_cast<std::int64_t>(a) + d;
                if (va < 0 || va >= static_cast<std::int64_t>(words())) continue;
                if (static_cast<std::uint64_t>(va) / profile_.coupling.row_length_words != row)
                    continue;
                std::uint64_t r = coupling_stream_.next(a);
                if (to_unit(r) >= profile_.coupling.p_couple) continue;
                int nbits = std::popcount(changed);
                int pick = static_cast<int>(to_range(coupling_stream_.next(a), nbits));
                word bit = select_set_bit(changed, pick);
                storage_[static_cast<addr_t>(va)] ^= (1u << bit);
                record_event(FaultKind::coupling, static_cast<addr_t>(va), bit,
                             coupling_stream_.counter());
            }
        }
    }

    static word select_set_bit(word mask, int index) {
        for (word b = 0; b < 32; ++b) {
            if (!(mask & (1u << b))) continue;
            if (index-- == 0) return b;
        }
        throw std::logic_error("bit index outside set-bit count");
    }

    void sync_transients() {
        if (!transients_active_) return;
        double dt_hours = (clock_.now_seconds - last_transient_sync_s_) / 3600.0;
        last_transient_sync_s_ = clock_.now_seconds;
        if (dt_hours <= 0.0) return;
        double mean = profile_.transient_rate_lambda *
                      static_cast<double>(caps_.region.bits()) * dt_hours;
        std::uint64_t n = transient_stream_.next_poisson(mean);
        for (std::uint64_t i = 0; i < n; ++i) {
            addr_t a = transient_stream_.next_range(words());
            std::uint8_t bit = static_cast<std::uint8_t>(transient_stream_.next() & 31);
            storage_[a] ^= (1u << bit);
            record_event(FaultKind::transient, a, bit, transient_stream_.counter());
        }
    }

    void record_event(FaultKind k, addr_t a, std::uint8_t bit, std::uint64_t op_counter) {
        ++counts_[static_cast<std::size_t>(k)];
        if (log_events_)
            events_.push_back(FaultEvent{k, a, bit, clock_.now_seconds, op_counter});
    }

    FaultProfile profile_;
    std::vector<word> storage_;
    std::vector<word> scratch_plain_;
    std::unique_ptr<SimDevice> scratch_sim_;
    std::vector<StuckAtFault> stuck_;  // sorted by address

    VirtualClock clock_;
    double last_transient_sync_s_ = 0.0;
    double od_base_ = 0.0;  // alpha * max(0, f - f0)^gamma, fixed per device
    bool coupling_active_ = false;
    bool transients_active_ = false;

    std::uint32_t depth_ = 0;
    bool have_prev_beat_ = false;
    word prev_beat_ = 0;

    RandomStream od_stream_;
    RandomStream coupling_stream_;
    RandomStream transient_stream_;
    RandomStream alu_stream_;

    std::array<std::uint64_t, kFaultKindCount> counts_{};
    bool log_events_ = false;
    std::vector<FaultEvent> events_;
};

}  // namespace memsoak
