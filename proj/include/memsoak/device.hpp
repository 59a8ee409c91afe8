#pragma once

// Abstract word-addressed memory device plus the host-buffer reference
// implementation. Test kernels see only this interface; fault injection lives
// entirely in simulated devices layered on top of it.
//
// All bulk operations are half-open word ranges inside a single region.
// Out-of-range access throws; partial writes never happen.

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace memsoak {

using word = std::uint32_t;
using addr_t = std::uint64_t;

enum class Arch { g80, gt200, other };

inline const char* to_string(Arch a) {
    switch (a) {
        case Arch::g80: return "G80";
        case Arch::gt200: return "GT200";
        default: return "OTHER";
    }
}

inline Arch arch_from_string(const std::string& s) {
    if (s == "G80") return Arch::g80;
    if (s == "GT200") return Arch::gt200;
    if (s == "OTHER") return Arch::other;
    throw std::invalid_argument("unknown architecture: " + s);
}

// Region size is carried as an exact word count. The MiB view is only needed
// when emitting records; sub-MiB regions are legal for desk-scale runs.
struct RegionSpec {
    std::uint64_t word_count = 0;

    static RegionSpec from_mib(std::uint64_t mib) {
        if (mib == 0) throw std::invalid_argument("region size must be positive");
        return RegionSpec{mib * (1u << 20) / 4};
    }
    static RegionSpec from_words(std::uint64_t words) {
        if (words == 0) throw std::invalid_argument("region size must be positive");
        return RegionSpec{words};
    }

    std::uint64_t bytes() const { return word_count * 4; }
    std::uint64_t bits() const { return word_count * 32; }
    // Exact only when the region was built from whole MiB; callers validating
    // deployed configurations check that first.
    std::uint64_t mib() const { return bytes() >> 20; }
    bool whole_mib() const { return bytes() % (1u << 20) == 0; }
};

// Deployed field pairings of region size and logic-test period.
inline bool is_deployed_pair(std::uint64_t region_mib, std::uint64_t lcg_period) {
    return (region_mib == 32 && lcg_period == 256) ||
           (region_mib == 64 && lcg_period == 512) ||
           (region_mib == 128 && lcg_period == 1024);
}

struct DeviceCapabilities {
    RegionSpec region;
    std::uint32_t lane_count = 16;        // parallel execution width
    std::uint64_t scratchpad_words = 4096;
    std::string device_name = "host-buffer";
    Arch architecture = Arch::other;
    double shader_clock_mhz = 1350.0;
    double memory_clock_mhz = 400.0;
};

class MemoryDevice {
  public:
    explicit MemoryDevice(DeviceCapabilities caps) : caps_(std::move(caps)) {
        if (caps_.region.word_count == 0)
            throw std::invalid_argument("device region must be non-empty");
    }
    virtual ~MemoryDevice() = default;

    const DeviceCapabilities& caps() const { return caps_; }
    std::uint64_t words() const { return caps_.region.word_count; }

    // Kernel scopes bracket what would be one launch on real hardware. Fault
    // models tied to intra-launch bus activity reset at scope entry.
    virtual void begin_kernel() {}
    virtual void end_kernel() {}

    virtual void write_words(addr_t base, std::span<const word> values) = 0;
    virtual void fill_words(addr_t base, std::uint64_t count, word value) = 0;
    virtual void read_words(addr_t base, std::span<word> out) = 0;

    // Read-and-compare in one pass; returns the mismatch count. Equivalent to
    // read_words plus comparison, including all read-path fault effects.
    virtual std::uint64_t verify_fill(addr_t base, std::uint64_t count, word value) = 0;
    virtual std::uint64_t verify_words(addr_t base, std::span<const word> expected) = 0;

    void fill(word value) { fill_words(0, words(), value); }

    word read_word(addr_t a) {
        word v = 0;
        read_words(a, {&v, 1});
        return v;
    }
    void write_word(addr_t a, word v) { write_words(a, {&v, 1}); }

    // ALU result hook: exact wrapped arithmetic on the host, fault-injectable
    // on simulated devices. All logic-test and generator arithmetic the device
    // is responsible for goes through here.
    virtual word alu_result(word exact) { return exact; }
    word alu_mul_add(word a, word x, word c) {
        return alu_result(static_cast<word>(a * x + c));
    }
    virtual bool alu_exact() const { return true; }

    // Per-lane-group scratchpad, addressed by slot.
    virtual word scratch_load(std::uint64_t slot) = 0;
    virtual void scratch_store(std::uint64_t slot, word value) = 0;
    virtual bool scratch_exact() const { return true; }

  protected:
    void check_range(addr_t base, std::uint64_t count) const {
        if (base > words() || count > words() - base)
            throw std::out_of_range("device access [" + std::to_string(base) + ", " +
                                    std::to_string(base + count) + ") outside region of " +
                                    std::to_string(words()) + " words");
    }
    void check_slot(std::uint64_t slot) const {
        if (slot >= caps_.scratchpad_words)
            throw std::out_of_range("scratchpad slot " + std::to_string(slot) +
                                    " outside " + std::to_string(caps_.scratchpad_words));
    }

    DeviceCapabilities caps_;
};

struct KernelScope {
    explicit KernelScope(MemoryDevice& d) : dev(d) { dev.begin_kernel(); }
    ~KernelScope() { dev.end_kernel(); }
    KernelScope(const KernelScope&) = delete;
    KernelScope& operator=(const KernelScope&) = delete;
    MemoryDevice& dev;
};

// Plain in-process buffer. The negative control: reports whatever the host's
// RAM actually does, which in practice is zero errors.
class HostBufferDevice final : public MemoryDevice {
  public:
    explicit HostBufferDevice(DeviceCapabilities caps)
        : MemoryDevice(std::move(caps)),
          storage_(words(), 0u),
          scratch_(caps_.scratchpad_words, 0u) {}

    explicit HostBufferDevice(RegionSpec region)
        : HostBufferDevice(DeviceCapabilities{region}) {}

    void write_words(addr_t base, std::span<const word> values) override {
        check_range(base, values.size());
        std::copy(values.begin(), values.end(), storage_.begin() + base);
    }

    void fill_words(addr_t base, std::uint64_t count, word value) override {
        check_range(base, count);
        std::fill_n(storage_.begin() + base, count, value);
    }

    void read_words(addr_t base, std::span<word> out) override {
        check_range(base, out.size());
        std::copy_n(storage_.begin() + base, out.size(), out.begin());
    }

    std::uint64_t verify_fill(addr_t base, std::uint64_t count, word value) override {
        check_range(base, count);
        const word* p = storage_.data() + base;
        std::uint64_t mismatches = 0;
        for (std::uint64_t i = 0; i < count; ++i) mismatches += (p[i] != value);
        return mismatches;
    }

    std::uint64_t verify_words(addr_t base, std::span<const word> expected) override {
        check_range(base, expected.size());
        const word* p = storage_.data() + base;
        std::uint64_t mismatches = 0;
        for (std::uint64_t i = 0; i < expected.size(); ++i)
            mismatches += (p[i] != expected[i]);
        return mismatches;
    }

    word scratch_load(std::uint64_t slot) override {
        check_slot(slot);
        return scratch_[slot];
    }
    void scratch_store(std::uint64_t slot, word value) override {
        check_slot(slot);
        scratch_[slot] = value;
    }

    // Direct image access for differential tests.
    std::span<const word> image() const { return storage_; }

  private:
    std::vector<word> storage_;
    std::vector<word> scratch_;
};

}  // namespace memsoak
