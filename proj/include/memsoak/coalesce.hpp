#pragma once

// Half-warp transaction formation under the two coalescing rule sets, plus
// trace generators for the modulo-20 access pattern and a byte/transaction
// traffic report.
//
// Rule tables (4-byte accesses, one half-warp of 16 lanes per group):
//   G80:   if every active lane i hits base + 4*i for one 64-byte-aligned
//          base, the group is one 64-byte transaction (inactive lanes are
//          gaps); otherwise every active lane pays its own 32-byte
//          transaction.
//   GT200: active lanes are binned by 128-byte segment; each segment is one
//          transaction, shrunk 128 -> 64 -> 32 while all touched bytes fit in
//          the lower or upper half of the current size.
// For any group, GT200 never emits more transactions than G80. Byte counts
// can go either way on adversarial groups (a sparse pair inside one segment
// costs GT200 128 bytes but G80 64), so byte dominance is asserted at the
// level of whole traffic reports, where it holds for every shipped mapping.

#include <algorithm>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace memsoak {

enum class AccessKind : std::uint8_t { read, write };

struct Access {
    std::uint32_t lane = 0;  // 0..15 within the half-warp
    std::uint64_t byte_address = 0;
    std::uint8_t size_bytes = 4;
    AccessKind kind = AccessKind::write;
    bool active = true;
};

struct HalfWarpGroup {
    std::vector<Access> accesses;
};

struct AccessTrace {
    std::vector<HalfWarpGroup> groups;
};

struct TransactionStats {
    std::uint64_t transactions = 0;
    std::uint64_t bytes = 0;

    TransactionStats& operator+=(const TransactionStats& o) {
        transactions += o.transactions;
        bytes += o.bytes;
        return *this;
    }
    bool operator==(const TransactionStats&) const = default;
};

namespace detail {

inline void validate_group(const HalfWarpGroup& g) {
    std::uint32_t seen = 0;
    for (const Access& a : g.accesses) {
        if (a.lane >= 16) throw std::invalid_argument("lane id outside half-warp");
        if (seen & (1u << a.lane)) throw std::invalid_argument("duplicate lane in half-warp");
        seen |= 1u << a.lane;
        if (a.size_bytes != 4) throw std::invalid_argument("only 4-byte accesses are modeled");
        if (a.byte_address % 4 != 0) throw std::invalid_argument("misaligned access");
    }
}

}  // namespace detail

inline TransactionStats coalesce_g80(const AccessTrace& trace) {
    TransactionStats stats;
    for (const HalfWarpGroup& g : trace.groups) {
        detail::validate_group(g);
        std::uint64_t actives = 0;
        bool conforming = true;
        bool have_base = false;
        std::uint64_t base = 0;
        for (const Access& a : g.accesses) {
            if (!a.active) continue;
            ++actives;
            std::uint64_t b = a.byte_address - 4ull * a.lane;
            if (a.byte_address < 4ull * a.lane || b % 64 != 0) {
                conforming = false;
            } else if (!have_base) {
                base = b;
                have_base = true;
            } else if (b != base) {
                conforming = false;
            }
        }
        if (actives == 0) continue;
        if (conforming) {
            stats.transactions += 1;
            stats.bytes += 64;
        } else {
            stats.transactions += actives;
            stats.bytes += 32 * actives;
        }
    }
    return stats;
}

inline TransactionStats coalesce_gt200(const AccessTrace& trace) {
    TransactionStats stats;
    std::map<std::uint64_t, std::pair<std::uint64_t, std::uint64_t>> segs;  // seg -> [lo, hi)
    for (const HalfWarpGroup& g : trace.groups) {
        detail::validate_group(g);
        segs.clear();
        for (const Access& a : g.accesses) {
            if (!a.active) continue;
            auto [it, fresh] = segs.try_emplace(a.byte_address / 128, a.byte_address,
                                                a.byte_address + a.size_bytes);
            if (!fresh) {
                it->second.first = std::min(it->second.first, a.byte_address);
                it->second.second =
                    std::max(it->second.second, a.byte_address + a.size_bytes);
            }
        }
        for (const auto& [seg, span] : segs) {
            std::uint64_t base = seg * 128;
            std::uint64_t size = 128;
            while (size > 32) {
                std::uint64_t half = size / 2;
                if (span.second <= base + half) {
                    size = half;
                } else if (span.first >= base + half) {
                    base += half;
                    size = half;
                } else {
                    break;
                }
            }
            stats.transactions += 1;
            stats.bytes += size;
        }
    }
    return stats;
}

// Lane-to-address mappings for one modulo-20 round. "packed" is the reference
// scheme: each address class is processed densely, sixteen consecutive class
// elements per half-warp. The sweep schemes walk the region in aligned
// 16-word windows with predication; "sweep-split" gives each logical pass its
// own sweep, while "sweep-fused" merges the first complement write into a
// dense combined store.
enum class M20Mapping { packed, sweep_split, sweep_fused };

inline const char* to_string(M20Mapping m) {
    switch (m) {
        case M20Mapping::packed: return "packed";
        case M20Mapping::sweep_split: return "sweep-split";
        case M20Mapping::sweep_fused: return "sweep-fused";
    }
    throw std::invalid_argument("bad mapping");
}

inline M20Mapping m20_mapping_from_string(const std::string& s) {
    for (M20Mapping m : {M20Mapping::packed, M20Mapping::sweep_split, M20Mapping::sweep_fused})
        if (s == to_string(m)) return m;
    throw std::invalid_argument("unknown mapping name: " + s);
}

namespace detail {

// Chunk an address list into half-warps of 16, lane = position in chunk.
inline void emit_packed(AccessTrace& t, const std::vector<std::uint64_t>& words,
                        AccessKind kind) {
    for (std::size_t i = 0; i < words.size(); i += 16) {
        HalfWarpGroup g;
        for (std::size_t j = i; j < std::min(i + 16, words.size()); ++j)
            g.accesses.push_back(
                {static_cast<std::uint32_t>(j - i), words[j] * 4, 4, kind, true});
        t.groups.push_back(std::move(g));
    }
}

// Walk the region in aligned 16-word windows; lane i owns word base + i and
// is active when pred(word) holds. Windows with no active lane emit nothing.
template <class Pred>
void emit_sweep(AccessTrace& t, std::uint64_t region_words, AccessKind kind, Pred pred) {
    for (std::uint64_t base = 0; base < region_words; base += 16) {
        HalfWarpGroup g;
        for (std::uint64_t w = base; w < std::min(base + 16, region_words); ++w)
            if (pred(w))
                g.accesses.push_back(
                    {static_cast<std::uint32_t>(w - base), w * 4, 4, kind, true});
        if (!g.accesses.empty()) t.groups.push_back(std::move(g));
    }
}

}  // namespace detail

inline AccessTrace trace_m20(std::uint64_t region_words, std::uint32_t round,
                             M20Mapping mapping) {
    if (round >= 20) throw std::invalid_argument("modulo-20 round index out of range");
    auto is_class = [round](std::uint64_t w) { return w % 20 == round; };
    AccessTrace t;
    switch (mapping) {
        case M20Mapping::packed: {
            std::vector<std::uint64_t> cls, rest;
            for (std::uint64_t w = 0; w < region_words; ++w)
                (is_class(w) ? cls : rest).push_back(w);
            detail::emit_packed(t, cls, AccessKind::write);
            detail::emit_packed(t, rest, AccessKind::write);
            detail::emit_packed(t, rest, AccessKind::write);
            detail::emit_packed(t, cls, AccessKind::read);
            break;
        }
        case M20Mapping::sweep_split: {
            detail::emit_sweep(t, region_words, AccessKind::write, is_class);
            auto rest = [&](std::uint64_t w) { return !is_class(w); };
            detail::emit_sweep(t, region_words, AccessKind::write, rest);
            detail::emit_sweep(t, region_words, AccessKind::write, rest);
            detail::emit_sweep(t, region_words, AccessKind::read, is_class);
            break;
        }
        case M20Mapping::sweep_fused: {
            // combined store: every lane writes (pattern on the class lane,
            // complement elsewhere), then the second complement store, then
            // the class-predicated verify
            detail::emit_sweep(t, region_words, AccessKind::write,
                               [](std::uint64_t) { return true; });
            detail::emit_sweep(t, region_words, AccessKind::write,
                               [&](std::uint64_t w) { return !is_class(w); });
            detail::emit_sweep(t, region_words, AccessKind::read, is_class);
            break;
        }
    }
    return t;
}

struct TrafficReport {
    TransactionStats g80;
    TransactionStats gt200;
    double byte_ratio = 0.0;
};

inline TrafficReport traffic_report(std::uint64_t region_words,
                                    M20Mapping mapping = M20Mapping::packed) {
    if (region_words < 320)
        throw std::invalid_argument("traffic report needs at least 320 words");
    TrafficReport rep;
    for (std::uint32_t r = 0; r < 20; ++r) {
        AccessTrace t = trace_m20(region_words, r, mapping);
        rep.g80 += coalesce_g80(t);
        rep.gt200 += coalesce_gt200(t);
    }
    rep.byte_ratio = static_cast<double>(rep.g80.bytes) / static_cast<double>(rep.gt200.bytes);
    return rep;
}

}  // namespace memsoak
