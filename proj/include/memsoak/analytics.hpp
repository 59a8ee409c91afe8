#pragma once

// Statistics over record files: per-card failure probabilities, CDFs and
// PMFs under iteration cutoffs, entropies and information gain for indicator
// hypotheses, day/night partitioning, overclock classification, and the
// pairwise test mutual-information matrix.
//
// Conventions, fixed here and surfaced in the CLI: per-card p_fail
// histograms use 1000 equal-width bins over [0,1]; per-test error-count
// histograms use 10 bins with bin 0 reserved for exactly-zero counts and the
// rest equal-width over (0, max]. Everything is log base 2. Entropy and MI
// sums accumulate in sorted order so equal multisets of terms give bitwise
// equal results (this makes MI exactly symmetric under transposition).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "memsoak/fleet.hpp"
#include "memsoak/records.hpp"
#include "memsoak/test_codes.hpp"

namespace memsoak {

inline constexpr std::size_t kPfailBins = 1000;
inline constexpr std::size_t kCountBins = 10;

struct CardEstimate {
    std::string card_id;
    std::uint64_t iterations = 0;
    std::uint64_t failures = 0;
    double p_fail = 0.0;
};

struct CardHistory {
    std::string card_id;
    std::vector<IterationRecord> records;
};

struct Dataset {
    std::vector<CardHistory> cards;  // sorted by card_id
    std::uint64_t record_count = 0;
};

inline Dataset group_records(std::vector<IterationRecord> records) {
    std::map<std::string, std::vector<IterationRecord>> by_id;
    for (auto& r : records) by_id[r.card_id].push_back(std::move(r));
    Dataset d;
    d.cards.reserve(by_id.size());
    for (auto& [id, recs] : by_id) {
        d.record_count += recs.size();
        d.cards.push_back({id, std::move(recs)});
    }
    return d;
}

inline Dataset load_dataset(const std::vector<std::filesystem::path>& paths) {
    std::vector<IterationRecord> all;
    for (const auto& p : paths) {
        auto part = load_record_file(p);
        all.insert(all.end(), std::make_move_iterator(part.begin()),
                   std::make_move_iterator(part.end()));
    }
    return group_records(std::move(all));
}

inline Dataset load_records(const std::filesystem::path& path) { return load_dataset({path}); }

inline std::vector<CardEstimate> card_pfail(const Dataset& d, std::uint64_t min_iterations) {
    if (min_iterations == 0) throw std::invalid_argument("cutoff must be at least 1");
    std::vector<CardEstimate> out;
    for (const auto& card : d.cards) {
        const std::uint64_t n = card.records.size();
        if (n < min_iterations) continue;
        std::uint64_t failures = 0;
        for (const auto& r : card.records) failures += r.failed;
        out.push_back({card.card_id, n, failures,
                       static_cast<double>(failures) / static_cast<double>(n)});
    }
    return out;
}

struct Histogram {
    std::vector<double> bin_edges;  // bins + 1, strictly increasing
    std::vector<std::uint64_t> counts;
    std::uint64_t total = 0;

    std::vector<double> mass() const {
        std::vector<double> m(counts.size(), 0.0);
        if (total == 0) return m;
        for (std::size_t i = 0; i < counts.size(); ++i)
            m[i] = static_cast<double>(counts[i]) / static_cast<double>(total);
        return m;
    }
};

// Values outside [first, last] edges are dropped; the last bin is closed so
// a value equal to the top edge counts.
inline Histogram make_histogram(std::vector<double> edges, const std::vector<double>& values) {
    if (edges.size() < 2 || !std::is_sorted(edges.begin(), edges.end()))
        throw std::invalid_argument("need at least two sorted bin edges");
    Histogram h;
    h.counts.assign(edges.size() - 1, 0);
    h.bin_edges = std::move(edges);
    for (double v : values) {
        if (v < h.bin_edges.front() || v > h.bin_edges.back()) continue;
        auto it = std::upper_bound(h.bin_edges.begin(), h.bin_edges.end(), v);
        std::size_t idx = static_cast<std::size_t>(it - h.bin_edges.begin());
        idx = idx == 0 ? 0 : idx - 1;
        if (idx >= h.counts.size()) idx = h.counts.size() - 1;  // top edge closes the last bin
        ++h.counts[idx];
        ++h.total;
    }
    return h;
}

inline Histogram pfail_histogram(const std::vector<CardEstimate>& estimates,
                                 std::size_t bins = kPfailBins) {
    if (bins == 0) throw std::invalid_argument("need at least one bin");
    Histogram h;
    h.bin_edges.resize(bins + 1);
    for (std::size_t i = 0; i <= bins; ++i)
        h.bin_edges[i] = static_cast<double>(i) / static_cast<double>(bins);
    h.counts.assign(bins, 0);
    for (const auto& e : estimates) {
        auto idx = static_cast<std::size_t>(e.p_fail * static_cast<double>(bins));
        if (idx >= bins) idx = bins - 1;
        ++h.counts[idx];
        ++h.total;
    }
    return h;
}

inline std::vector<double> empirical_cdf(const std::vector<CardEstimate>& estimates,
                                         const std::vector<double>& eval_points) {
    if (estimates.empty()) throw std::invalid_argument("no card estimates");
    std::vector<double> sorted;
    sorted.reserve(estimates.size());
    for (const auto& e : estimates) sorted.push_back(e.p_fail);
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> out;
    out.reserve(eval_points.size());
    for (double x : eval_points) {
        auto le = std::upper_bound(sorted.begin(), sorted.end(), x) - sorted.begin();
        out.push_back(static_cast<double>(le) / static_cast<double>(sorted.size()));
    }
    return out;
}

inline Histogram empirical_pmf(const std::vector<CardEstimate>& estimates,
                               std::vector<double> bin_edges) {
    if (estimates.empty()) throw std::invalid_argument("no card estimates");
    std::vector<double> vals;
    vals.reserve(estimates.size());
    for (const auto& e : estimates) vals.push_back(e.p_fail);
    return make_histogram(std::move(bin_edges), vals);
}

namespace detail {

inline double sorted_sum(std::vector<double>& terms) {
    std::sort(terms.begin(), terms.end());
    double s = 0.0;
    for (double t : terms) s += t;
    return s;
}

inline double clamp_rounding(double v) { return (v < 0.0 && v >= -1e-12) ? 0.0 : v; }

}  // namespace detail

inline double entropy(const std::vector<double>& mass) {
    std::vector<double> terms;
    terms.reserve(mass.size());
    for (double p : mass) {
        if (p < 0.0) throw std::invalid_argument("negative probability mass");
        if (p > 0.0) terms.push_back(-p * std::log2(p));
    }
    return detail::sorted_sum(terms);
}

inline double entropy(const Histogram& h) { return entropy(h.mass()); }

// Joint distribution as rows x cols of probability mass.
inline double mutual_information(const std::vector<std::vector<double>>& joint) {
    if (joint.empty() || joint.front().empty())
        throw std::invalid_argument("empty joint distribution");
    const std::size_t rows = joint.size(), cols = joint.front().size();
    double total = 0.0;
    std::vector<double> px(rows, 0.0), py(cols, 0.0);
    for (std::size_t x = 0; x < rows; ++x) {
        if (joint[x].size() != cols) throw std::invalid_argument("ragged joint distribution");
        for (std::size_t y = 0; y < cols; ++y) {
            const double p = joint[x][y];
            if (p < 0.0) throw std::invalid_argument("negative probability mass");
            px[x] += p;
            py[y] += p;
            total += p;
        }
    }
    if (std::abs(total - 1.0) > 1e-6)
        throw std::invalid_argument("joint mass does not sum to 1");
    std::vector<double> terms;
    for (std::size_t x = 0; x < rows; ++x)
        for (std::size_t y = 0; y < cols; ++y) {
            const double p = joint[x][y];
            if (p > 0.0) terms.push_back(p * std::log2(p / (px[x] * py[y])));
        }
    return detail::clamp_rounding(detail::sorted_sum(terms));
}

struct IndicatorPartition {
    std::string indicator;
    std::map<std::string, std::vector<CardEstimate>> subsets;
    std::uint64_t excluded = 0;
};

struct InfoGain {
    double h_dataset = 0.0;
    double gain = 0.0;
    std::uint64_t n_total = 0;
};

inline InfoGain information_gain(const IndicatorPartition& part,
                                 std::size_t bins = kPfailBins) {
    if (part.subsets.size() < 2)
        throw std::invalid_argument("partition needs at least two labels");
    std::vector<CardEstimate> all;
    for (const auto& [label, est] : part.subsets)
        all.insert(all.end(), est.begin(), est.end());
    if (all.empty()) throw std::invalid_argument("partition covers no estimates");

    InfoGain ig;
    ig.n_total = all.size();
    ig.h_dataset = entropy(pfail_histogram(all, bins));
    std::vector<double> cond_terms;
    for (const auto& [label, est] : part.subsets) {
        if (est.empty()) continue;  // zero weight, contributes nothing
        const double weight =
            static_cast<double>(est.size()) / static_cast<double>(all.size());
        cond_terms.push_back(weight * entropy(pfail_histogram(est, bins)));
    }
    ig.gain = detail::clamp_rounding(ig.h_dataset - detail::sorted_sum(cond_terms));
    return ig;
}

// Zero-failure vs any-failure split: the best indicator this dataset admits.
inline IndicatorPartition perfect_partition(const std::vector<CardEstimate>& estimates) {
    IndicatorPartition part;
    part.indicator = "perfect";
    part.subsets["ZERO"];
    part.subsets["NONZERO"];
    for (const auto& e : estimates)
        part.subsets[e.failures == 0 ? "ZERO" : "NONZERO"].push_back(e);
    return part;
}

enum class OverclockStatus { stock, overclocked, indeterminate };

inline const char* to_string(OverclockStatus s) {
    switch (s) {
        case OverclockStatus::stock: return "STOCK";
        case OverclockStatus::overclocked: return "OVERCLOCKED";
        case OverclockStatus::indeterminate: return "INDETERMINATE";
    }
    throw std::invalid_argument("bad overclock status");
}

using StockTable = std::map<std::string, std::vector<std::uint32_t>>;

inline StockTable default_stock_table() {
    StockTable t;
    for (const auto& m : device_models()) t[m.name] = m.stock_clocks_mhz;
    return t;
}

inline OverclockStatus classify_overclock(const std::vector<std::uint32_t>& stock_clocks,
                                          std::uint32_t reported_mhz) {
    if (stock_clocks.empty()) return OverclockStatus::indeterminate;
    auto [lo, hi] = std::minmax_element(stock_clocks.begin(), stock_clocks.end());
    if (reported_mhz > *hi) return OverclockStatus::overclocked;
    if (reported_mhz <= *lo) return OverclockStatus::stock;
    return OverclockStatus::indeterminate;
}

inline OverclockStatus classify_overclock(const CardSpec& card) {
    return classify_overclock(card.stock_clocks_mhz, card.reported_clock_mhz);
}

inline OverclockStatus classify_overclock(const StockTable& table,
                                          const std::string& device_name,
                                          std::uint32_t reported_mhz) {
    auto it = table.find(device_name);
    if (it == table.end()) return OverclockStatus::indeterminate;
    return classify_overclock(it->second, reported_mhz);
}

enum class DayNight { day, night, excluded };

// Day is [06:00, 18:00) local. A record is DAY or NIGHT only when both
// endpoints sit inside the same window; anything spanning a boundary, or 12
// hours and longer (which must cross one), is excluded.
inline DayNight classify_daynight(std::int64_t start_utc, std::int64_t end_utc,
                                  std::int32_t utc_offset_min) {
    if (end_utc - start_utc >= 43200) return DayNight::excluded;
    auto in_day = [&](std::int64_t t) {
        std::int64_t local = t + static_cast<std::int64_t>(utc_offset_min) * 60;
        std::int64_t s = ((local % 86400) + 86400) % 86400;
        return s >= 6 * 3600 && s < 18 * 3600;
    };
    const bool sd = in_day(start_utc), ed = in_day(end_utc);
    if (sd && ed) return DayNight::day;
    if (!sd && !ed) return DayNight::night;
    return DayNight::excluded;
}

inline DayNight classify_daynight(const IterationRecord& r) {
    return classify_daynight(r.start_utc, r.end_utc, r.utc_offset_min);
}

namespace detail {

inline CardEstimate estimate_from(const std::string& card_id,
                                  const std::vector<const IterationRecord*>& recs) {
    CardEstimate e;
    e.card_id = card_id;
    e.iterations = recs.size();
    for (const auto* r : recs) e.failures += r->failed;
    e.p_fail = static_cast<double>(e.failures) / static_cast<double>(e.iterations);
    return e;
}

}  // namespace detail

// Cards are split per record into their day and night activity; a card can
// contribute an estimate to both subsets. Boundary-spanning records are
// dropped, as are subset estimates with too few iterations.
inline IndicatorPartition partition_by_daynight(const Dataset& d,
                                                std::uint64_t min_iterations = 1) {
    IndicatorPartition part;
    part.indicator = "daynight";
    part.subsets["DAY"];
    part.subsets["NIGHT"];
    for (const auto& card : d.cards) {
        std::vector<const IterationRecord*> day, night;
        for (const auto& r : card.records) {
            switch (classify_daynight(r)) {
                case DayNight::day: day.push_back(&r); break;
                case DayNight::night: night.push_back(&r); break;
                case DayNight::excluded: ++part.excluded; break;
            }
        }
        if (day.size() >= min_iterations)
            part.subsets["DAY"].push_back(detail::estimate_from(card.card_id, day));
        if (night.size() >= min_iterations)
            part.subsets["NIGHT"].push_back(detail::estimate_from(card.card_id, night));
    }
    return part;
}

inline IndicatorPartition partition_by_architecture(const Dataset& d,
                                                    std::uint64_t min_iterations = 1) {
    IndicatorPartition part;
    part.indicator = "architecture";
    for (Arch a : {Arch::g80, Arch::gt200, Arch::other}) part.subsets[to_string(a)];
    std::map<std::string, const CardHistory*> by_id;
    for (const auto& card : d.cards) by_id[card.card_id] = &card;
    for (auto& e : card_pfail(d, min_iterations)) {
        const std::string& arch = by_id.at(e.card_id)->records.front().architecture;
        part.subsets.at(arch).push_back(std::move(e));
    }
    return part;
}

inline IndicatorPartition partition_by_overclock(const Dataset& d,
                                                 const StockTable& table,
                                                 std::uint64_t min_iterations = 1) {
    IndicatorPartition part;
    part.indicator = "overclock";
    part.subsets["STOCK"];
    part.subsets["OVERCLOCKED"];
    auto estimates = card_pfail(d, min_iterations);
    std::map<std::string, const CardHistory*> by_id;
    for (const auto& card : d.cards) by_id[card.card_id] = &card;
    for (auto& e : estimates) {
        const CardHistory* card = by_id.at(e.card_id);
        const IterationRecord& first = card->records.front();
        switch (classify_overclock(table, first.device_name, first.shader_clock_mhz)) {
            case OverclockStatus::stock: part.subsets["STOCK"].push_back(std::move(e)); break;
            case OverclockStatus::overclocked:
                part.subsets["OVERCLOCKED"].push_back(std::move(e));
                break;
            case OverclockStatus::indeterminate: ++part.excluded; break;
        }
    }
    return part;
}

struct TestMiMatrix {
    // ratio[y][x] = I(X;Y) / H(X): how much of column test X's entropy the
    // row test Y explains; NaN when H(X) = 0
    std::array<std::array<double, kTestCodeCount>, kTestCodeCount> ratio{};
    std::array<bool, kTestCodeCount> column_defined{};
    std::array<double, kTestCodeCount> test_entropy{};
};

// Bin an error count into the 10-bin convention: 0 stays in bin 0, positive
// counts split (0, max] into nine equal widths.
inline std::size_t count_bin(std::uint64_t count, std::uint64_t max_count) {
    if (count == 0) return 0;
    double t = 9.0 * static_cast<double>(count) / static_cast<double>(max_count) - 1e-9;
    if (t < 0.0) t = 0.0;
    return 1 + std::min<std::size_t>(8, static_cast<std::size_t>(t));
}

inline TestMiMatrix test_mi_matrix(const Dataset& d) {
    TestMiMatrix m;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (auto& row : m.ratio) row.fill(nan);
    if (d.record_count == 0) return m;

    std::array<std::uint64_t, kTestCodeCount> max_count{};
    for (const auto& card : d.cards)
        for (const auto& r : card.records)
            for (std::size_t t = 0; t < kTestCodeCount; ++t)
                max_count[t] = std::max(max_count[t], r.errors[t]);

    // per-record bins, then marginals and pairwise joints
    std::vector<std::array<std::uint8_t, kTestCodeCount>> bins;
    bins.reserve(d.record_count);
    for (const auto& card : d.cards)
        for (const auto& r : card.records) {
            std::array<std::uint8_t, kTestCodeCount> b{};
            for (std::size_t t = 0; t < kTestCodeCount; ++t)
                b[t] = max_count[t] == 0
                           ? 0
                           : static_cast<std::uint8_t>(count_bin(r.errors[t], max_count[t]));
            bins.push_back(b);
        }

    const double n = static_cast<double>(bins.size());
    for (std::size_t t = 0; t < kTestCodeCount; ++t) {
        std::array<std::uint64_t, kCountBins> c{};
        for (const auto& b : bins) ++c[b[t]];
        std::vector<double> mass(kCountBins);
        for (std::size_t k = 0; k < kCountBins; ++k) mass[k] = c[k] / n;
        m.test_entropy[t] = entropy(mass);
        m.column_defined[t] = m.test_entropy[t] > 0.0;
    }

    for (std::size_t y = 0; y < kTestCodeCount; ++y)
        for (std::size_t x = 0; x < kTestCodeCount; ++x) {
            if (!m.column_defined[x]) continue;
            std::array<std::array<std::uint64_t, kCountBins>, kCountBins> c{};
            for (const auto& b : bins) ++c[b[x]][b[y]];
            std::vector<std::vector<double>> joint(kCountBins,
                                                   std::vector<double>(kCountBins));
            for (std::size_t i = 0; i < kCountBins; ++i)
                for (std::size_t j = 0; j < kCountBins; ++j) joint[i][j] = c[i][j] / n;
            m.ratio[y][x] = mutual_information(joint) / m.test_entropy[x];
        }
    return m;
}

enum class Hypothesis { overclock, daynight, architecture };

inline const char* to_string(Hypothesis h) {
    switch (h) {
        case Hypothesis::overclock: return "overclock";
        case Hypothesis::daynight: return "daynight";
        case Hypothesis::architecture: return "architecture";
    }
    throw std::invalid_argument("bad hypothesis");
}

inline Hypothesis hypothesis_from_string(const std::string& s) {
    for (Hypothesis h :
         {Hypothesis::overclock, Hypothesis::daynight, Hypothesis::architecture})
        if (s == to_string(h)) return h;
    throw std::invalid_argument("unknown hypothesis: " + s);
}

struct HypothesisReport {
    std::string indicator;
    double h_dataset = 0.0;
    double gain = 0.0;
    double perfect_gain = 0.0;
    std::map<std::string, std::uint64_t> subset_sizes;
    std::uint64_t excluded = 0;
    std::uint64_t n_estimates = 0;
};

inline HypothesisReport hypothesis_report(const Dataset& d, Hypothesis hyp,
                                          const StockTable& stock_table = default_stock_table(),
                                          std::uint64_t min_iterations = 1,
                                          std::size_t bins = kPfailBins) {
    IndicatorPartition part;
    switch (hyp) {
        case Hypothesis::overclock:
            part = partition_by_overclock(d, stock_table, min_iterations);
            break;
        case Hypothesis::daynight: part = partition_by_daynight(d, min_iterations); break;
        case Hypothesis::architecture:
            part = partition_by_architecture(d, min_iterations);
            break;
    }
    InfoGain ig = information_gain(part, bins);

    std::vector<CardEstimate> all;
    for (const auto& [label, est] : part.subsets)
        all.insert(all.end(), est.begin(), est.end());
    InfoGain perfect = information_gain(perfect_partition(all), bins);

    HypothesisReport rep;
    rep.indicator = part.indicator;
    rep.h_dataset = ig.h_dataset;
    rep.gain = ig.gain;
    rep.perfect_gain = perfect.gain;
    for (const auto& [label, est] : part.subsets) rep.subset_sizes[label] = est.size();
    rep.excluded = part.excluded;
    rep.n_estimates = ig.n_total;
    return rep;
}

// Bits with four decimals, the reporting convention for entropies and gains.
inline std::string format_bits(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

}  // namespace memsoak
