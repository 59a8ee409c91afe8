#pragma once

// Synthetic card populations with planted failure characteristics, and the
// campaign runner that turns a fleet into a record file.
//
// A card's planted per-iteration failure probability is drawn from a bimodal
// mixture: a zero-error mass, a lognormal failing population, and an optional
// heavy tail (loguniform over [1e-4, 1e-2]). Campaigns run either in
// bernoulli mode (failure flags drawn directly, error counts synthesized from
// per-test sensitivity weights) or device mode (full iterations against a
// simulated device whose transient rate is calibrated so one expected Poisson
// hit per iteration window reproduces the planted probability).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "memsoak/device.hpp"
#include "memsoak/faultsim.hpp"
#include "memsoak/records.hpp"
#include "memsoak/rng.hpp"
#include "memsoak/testkit.hpp"

namespace memsoak {

inline constexpr double kTailLowPfail = 1e-4;
inline constexpr double kTailHighPfail = 1e-2;
inline constexpr std::uint32_t kStockMemoryClockMhz = 400;

struct DeviceModel {
    std::string name;
    Arch arch;
    std::vector<std::uint32_t> stock_clocks_mhz;
};

// Synthetic stock table. Some models ship in several clock bins on purpose:
// a reported clock between the lowest and highest bin cannot be classified.
inline const std::vector<DeviceModel>& device_models() {
    static const std::vector<DeviceModel> models = {
        {"GeForce 8800 GTX", Arch::g80, {1350, 1404}},
        {"GeForce 8800 GTS", Arch::g80, {1188}},
        {"GeForce GTX 280", Arch::gt200, {1296, 1350}},
        {"Tesla C1060", Arch::gt200, {1296}},
        {"Generic VRAM board", Arch::other, {1000, 1100}},
    };
    return models;
}

inline const DeviceModel* find_device_model(const std::string& name) {
    for (const auto& m : device_models())
        if (m.name == name) return &m;
    return nullptr;
}

struct CardSpec {
    std::string card_id;
    std::string device_name;
    Arch architecture = Arch::other;
    std::vector<std::uint32_t> stock_clocks_mhz;
    std::uint32_t reported_clock_mhz = 0;
    std::int32_t utc_offset_min = 0;
    double p_fail = 0.0;
    bool overclocked = false;
    FaultProfile profile;  // device-mode fault model; defaults to the null profile

    void validate() const {
        if (stock_clocks_mhz.empty())
            throw std::invalid_argument("card needs at least one stock clock");
        if (reported_clock_mhz == 0)
            throw std::invalid_argument("reported clock must be positive");
        if (!(p_fail >= 0.0 && p_fail <= 1.0))
            throw std::invalid_argument("p_fail outside [0,1]");
        profile.validate();
    }
};

struct FleetParams {
    std::uint64_t n_cards = 1000;
    double zero_error_fraction = 2.0 / 3.0;
    double mode_pfail = 2e-5;
    double log_sigma = 1.0;  // spread of the failing population; modeling default
    double tail_fraction = 0.0;
    std::map<Arch, double> arch_mix = {{Arch::g80, 1.0}};
    std::map<Arch, double> arch_pfail_scale;  // absent arch means scale 1.0
    double overclock_fraction = 0.0;
    std::uint64_t seed = 1;

    void validate() const {
        if (n_cards == 0) throw std::invalid_argument("fleet needs at least one card");
        auto frac = [](double v, const char* what) {
            if (!(v >= 0.0 && v <= 1.0))
                throw std::invalid_argument(std::string(what) + " outside [0,1]");
        };
        frac(zero_error_fraction, "zero_error_fraction");
        frac(tail_fraction, "tail_fraction");
        frac(overclock_fraction, "overclock_fraction");
        if (zero_error_fraction + tail_fraction > 1.0 + 1e-12)
            throw std::invalid_argument("population fractions exceed 1");
        if (!(mode_pfail > 0.0 && mode_pfail < 1.0))
            throw std::invalid_argument("mode_pfail outside (0,1)");
        if (!(log_sigma >= 0.0)) throw std::invalid_argument("log_sigma must be >= 0");
        if (arch_mix.empty()) throw std::invalid_argument("arch_mix is empty");
        double total = 0.0;
        for (auto& [arch, f] : arch_mix) {
            frac(f, "arch_mix fraction");
            total += f;
        }
        if (std::abs(total - 1.0) > 1e-9)
            throw std::invalid_argument("arch_mix fractions must sum to 1");
        for (auto& [arch, s] : arch_pfail_scale)
            if (!(s > 0.0)) throw std::invalid_argument("arch_pfail_scale must be > 0");
    }
};

inline void to_json(nlohmann::json& j, const FleetParams& p) {
    j = nlohmann::json::object();
    j["n_cards"] = p.n_cards;
    j["zero_error_fraction"] = p.zero_error_fraction;
    j["mode_pfail"] = p.mode_pfail;
    j["log_sigma"] = p.log_sigma;
    j["tail_fraction"] = p.tail_fraction;
    nlohmann::json mix = nlohmann::json::object();
    for (auto& [arch, f] : p.arch_mix) mix[to_string(arch)] = f;
    j["arch_mix"] = mix;
    nlohmann::json scale = nlohmann::json::object();
    for (auto& [arch, s] : p.arch_pfail_scale) scale[to_string(arch)] = s;
    j["arch_pfail_scale"] = scale;
    j["overclock_fraction"] = p.overclock_fraction;
    j["seed"] = p.seed;
}

inline void from_json(const nlohmann::json& j, FleetParams& p) {
    if (j.contains("n_cards")) j.at("n_cards").get_to(p.n_cards);
    if (j.contains("zero_error_fraction"))
        j.at("zero_error_fraction").get_to(p.zero_error_fraction);
    if (j.contains("mode_pfail")) j.at("mode_pfail").get_to(p.mode_pfail);
    if (j.contains("log_sigma")) j.at("log_sigma").get_to(p.log_sigma);
    if (j.contains("tail_fraction")) j.at("tail_fraction").get_to(p.tail_fraction);
    if (j.contains("arch_mix")) {
        p.arch_mix.clear();
        for (auto& [name, f] : j.at("arch_mix").items())
            p.arch_mix[arch_from_string(name)] = f.get<double>();
    }
    if (j.contains("arch_pfail_scale")) {
        p.arch_pfail_scale.clear();
        for (auto& [name, s] : j.at("arch_pfail_scale").items())
            p.arch_pfail_scale[arch_from_string(name)] = s.get<double>();
    }
    if (j.contains("overclock_fraction"))
        j.at("overclock_fraction").get_to(p.overclock_fraction);
    if (j.contains("seed")) j.at("seed").get_to(p.seed);
}

enum class CampaignMode { bernoulli, device };

inline const char* to_string(CampaignMode m) {
    return m == CampaignMode::bernoulli ? "bernoulli" : "device";
}

inline CampaignMode campaign_mode_from_string(const std::string& s) {
    if (s == "bernoulli") return CampaignMode::bernoulli;
    if (s == "device") return CampaignMode::device;
    throw std::invalid_argument("unknown campaign mode: " + s);
}

struct CampaignGeometry {
    std::uint64_t region_words = 32ull * 1024 * 1024 / 4;
    std::int64_t iteration_seconds = kIterationSeconds;
};

// Inverse of the per-iteration Poisson hit probability: a device whose
// transient process expects -ln(1-p) hits per iteration window fails at
// least once per iteration with probability p.
inline double pfail_to_lambda(double p_fail, std::uint64_t region_bits,
                              double iteration_hours) {
    if (p_fail <= 0.0) return 0.0;
    if (!(p_fail < 1.0))
        throw std::invalid_argument("p_fail must be < 1 for device calibration");
    return -std::log1p(-p_fail) /
           (static_cast<double>(region_bits) * iteration_hours);
}

inline std::vector<CardSpec> sample_fleet(const FleetParams& params,
                                          CampaignMode mode = CampaignMode::bernoulli,
                                          CampaignGeometry geom = {}) {
    params.validate();
    std::vector<const DeviceModel*> by_arch[3];
    for (const auto& m : device_models())
        by_arch[static_cast<int>(m.arch)].push_back(&m);

    const double iter_hours =
        static_cast<double>(geom.iteration_seconds) / 3600.0;
    const std::uint64_t region_bits = geom.region_words * 32ull;

    std::vector<CardSpec> fleet;
    fleet.reserve(params.n_cards);
    for (std::uint64_t i = 0; i < params.n_cards; ++i) {
        RandomStream rs(params.seed, mix64(0x63617264ull, i));
        CardSpec c;
        char idbuf[24];
        std::snprintf(idbuf, sizeof idbuf, "card-%06llu",
                      static_cast<unsigned long long>(i));
        c.card_id = idbuf;

        double u = rs.next_unit();
        double cum = 0.0;
        c.architecture = params.arch_mix.rbegin()->first;
        for (auto& [arch, f] : params.arch_mix) {
            cum += f;
            if (u < cum) {
                c.architecture = arch;
                break;
            }
        }
        const auto& models = by_arch[static_cast<int>(c.architecture)];
        const DeviceModel& model = *models[rs.next_range(models.size())];
        c.device_name = model.name;
        c.stock_clocks_mhz = model.stock_clocks_mhz;

        c.utc_offset_min =
            (static_cast<std::int32_t>(rs.next_range(24)) - 11) * 60;

        c.overclocked = rs.next_unit() < params.overclock_fraction;
        if (c.overclocked) {
            std::uint32_t top = *std::max_element(c.stock_clocks_mhz.begin(),
                                                  c.stock_clocks_mhz.end());
            c.reported_clock_mhz =
                top + 25 * (1 + static_cast<std::uint32_t>(rs.next_range(6)));
        } else {
            c.reported_clock_mhz =
                c.stock_clocks_mhz[rs.next_range(c.stock_clocks_mhz.size())];
        }

        double v = rs.next_unit();
        if (v < params.zero_error_fraction) {
            c.p_fail = 0.0;
        } else if (v < params.zero_error_fraction + params.tail_fraction) {
            c.p_fail = std::exp(std::log(kTailLowPfail) +
                                rs.next_unit() *
                                    std::log(kTailHighPfail / kTailLowPfail));
        } else {
            double scale = 1.0;
            if (auto it = params.arch_pfail_scale.find(c.architecture);
                it != params.arch_pfail_scale.end())
                scale = it->second;
            double p = std::exp(std::log(params.mode_pfail * scale) +
                                params.log_sigma * rs.next_normal());
            c.p_fail = std::min(p, 0.99);
        }

        c.profile.seed = mix64(params.seed, 0x70726F66ull, i);
        if (mode == CampaignMode::device)
            c.profile.transient_rate_lambda =
                pfail_to_lambda(c.p_fail, region_bits, iter_hours);
        fleet.push_back(std::move(c));
    }
    return fleet;
}

// Bernoulli-mode per-test sensitivity: probability that a failing iteration
// shows errors under each test, indexed like all_test_codes.
inline std::array<double, kTestCodeCount> default_test_weights() {
    std::array<double, kTestCodeCount> w{};
    w[index_of(TestCode::mi10)] = 0.02;
    w[index_of(TestCode::mir)] = 0.02;
    w[index_of(TestCode::w1m)] = 0.30;
    w[index_of(TestCode::w10)] = 0.30;
    w[index_of(TestCode::w11)] = 0.30;
    w[index_of(TestCode::w40)] = 0.30;
    w[index_of(TestCode::w41)] = 0.30;
    w[index_of(TestCode::rb)] = 0.30;
    w[index_of(TestCode::m20)] = 0.85;
    w[index_of(TestCode::l)] = 0.15;
    w[index_of(TestCode::l4)] = 0.15;
    w[index_of(TestCode::ls)] = 0.15;
    w[index_of(TestCode::ls4)] = 0.15;
    return w;
}

struct CampaignParams {
    std::uint64_t iterations_per_card = 1;
    CampaignMode mode = CampaignMode::bernoulli;
    std::uint64_t seed = 1;
    CampaignGeometry geometry;
    std::uint32_t lcg_period = 256;
    std::int64_t start_utc = 1736121600;  // 2025-01-06T00:00:00Z campaign epoch
    std::uint32_t workers = 1;
    std::array<double, kTestCodeCount> test_weights = default_test_weights();

    void validate() const {
        if (iterations_per_card == 0)
            throw std::invalid_argument("campaign needs at least one iteration per card");
        if (workers == 0) throw std::invalid_argument("campaign needs at least one worker");
        for (double w : test_weights)
            if (!(w >= 0.0 && w <= 1.0))
                throw std::invalid_argument("test weight outside [0,1]");
        make_cyclic_lcg(lcg_period);  // rejects bad periods
    }
};

namespace detail {

// All records for one card. Pure function of (card, card_index, params), so
// campaign output is independent of worker sharding.
inline std::vector<IterationRecord> campaign_card_records(const CardSpec& card,
                                                          std::uint64_t card_index,
                                                          const CampaignParams& cp) {
    const std::int64_t dur = cp.geometry.iteration_seconds;
    RandomStream time_rs(cp.seed, mix64(0x74696D65ull, card_index));
    const std::int64_t card_start =
        cp.start_utc + static_cast<std::int64_t>(time_rs.next_range(7ull * 24 * 3600));

    std::vector<IterationRecord> recs;
    recs.reserve(cp.iterations_per_card);

    if (cp.mode == CampaignMode::bernoulli) {
        RandomStream rs(cp.seed, mix64(0x6265726Eull, card_index));
        const RegionSpec region = RegionSpec::from_words(cp.geometry.region_words);
        for (std::uint64_t it = 0; it < cp.iterations_per_card; ++it) {
            IterationRecord r;
            r.card_id = card.card_id;
            r.device_name = card.device_name;
            r.architecture = to_string(card.architecture);
            r.region_mib = region.mib();
            r.lcg_period = cp.lcg_period;
            r.shader_clock_mhz = card.reported_clock_mhz;
            r.memory_clock_mhz = kStockMemoryClockMhz;
            r.start_utc = card_start + static_cast<std::int64_t>(it) * dur;
            r.end_utc = r.start_utc + dur;
            r.utc_offset_min = card.utc_offset_min;
            if (rs.next_unit() < card.p_fail) {
                // modulo-20 is the most sensitive test, so it draws first and
                // backstops the iteration if nothing else shows
                auto draw = [&](TestCode c) {
                    if (rs.next_unit() < cp.test_weights[index_of(c)])
                        r.errors[index_of(c)] = 1 + rs.next_range(4);
                };
                draw(TestCode::m20);
                for (TestCode c : all_test_codes)
                    if (c != TestCode::m20) draw(c);
                bool any = false;
                for (auto e : r.errors) any = any || e > 0;
                if (!any) r.errors[index_of(TestCode::m20)] = 1;
            }
            for (auto e : r.errors) r.failed = r.failed || e > 0;
            recs.push_back(std::move(r));
        }
        return recs;
    }

    DeviceCapabilities caps;
    caps.region = RegionSpec::from_words(cp.geometry.region_words);
    caps.device_name = card.device_name;
    caps.architecture = card.architecture;
    caps.shader_clock_mhz = card.reported_clock_mhz;
    caps.memory_clock_mhz = kStockMemoryClockMhz;
    SimDevice dev(caps, card.profile);

    IterationConfig cfg;
    cfg.card_id = card.card_id;
    cfg.lcg_period = cp.lcg_period;
    cfg.seed = mix64(cp.seed, 0x69746572ull, card_index);
    cfg.utc_offset_min = card.utc_offset_min;
    cfg.duration_seconds = dur;
    M20Cursor cursor;
    for (std::uint64_t it = 0; it < cp.iterations_per_card; ++it) {
        cfg.iteration_index = it;
        cfg.start_utc = card_start + static_cast<std::int64_t>(it) * dur;
        const double virtual_before = dev.clock().now_seconds;
        recs.push_back(run_iteration(dev, cfg, cursor));
        // pad the virtual clock to the wall window so transient exposure per
        // iteration matches the planted calibration
        const double spent = dev.clock().now_seconds - virtual_before;
        if (spent < static_cast<double>(dur)) dev.idle(static_cast<double>(dur) - spent);
    }
    return recs;
}

}  // namespace detail

inline std::vector<IterationRecord> run_campaign(const std::vector<CardSpec>& fleet,
                                                 const CampaignParams& cp) {
    cp.validate();
    for (const auto& card : fleet) card.validate();
    std::vector<std::vector<IterationRecord>> per_card(fleet.size());
    for (std::uint32_t w = 0; w < cp.workers; ++w)
        for (std::size_t i = w; i < fleet.size(); i += cp.workers)
            per_card[i] = detail::campaign_card_records(fleet[i], i, cp);
    std::vector<IterationRecord> out;
    out.reserve(fleet.size() * cp.iterations_per_card);
    for (auto& block : per_card)
        for (auto& r : block) out.push_back(std::move(r));
    return out;
}

// Streaming variant with resume: completed cards (iterations_per_card
// consecutive records each) are kept, a trailing partial card is discarded
// and regenerated. Returns the number of records appended by this call.
inline std::uint64_t run_campaign_to_file(const std::vector<CardSpec>& fleet,
                                          const CampaignParams& cp,
                                          const std::filesystem::path& path) {
    cp.validate();
    for (const auto& card : fleet) card.validate();
    auto existing = resume_record_file(path);
    const std::uint64_t iters = cp.iterations_per_card;
    std::uint64_t complete_cards = existing.size() / iters;
    if (complete_cards > fleet.size())
        throw std::runtime_error("record file has more cards than the fleet");
    for (std::uint64_t b = 0; b < complete_cards; ++b)
        for (std::uint64_t k = 0; k < iters; ++k)
            if (existing[b * iters + k].card_id != fleet[b].card_id)
                throw std::runtime_error("record file does not match fleet order");
    if (complete_cards * iters != existing.size()) {
        existing.resize(complete_cards * iters);
        write_record_file(path, existing);
    }
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for append");
    std::uint64_t appended = 0;
    for (std::size_t i = complete_cards; i < fleet.size(); ++i) {
        for (const auto& r : detail::campaign_card_records(fleet[i], i, cp)) {
            out << serialize_record(r) << '\n';
            ++appended;
        }
        out.flush();
        if (!out) throw std::runtime_error("write failed: " + path.string());
    }
    return appended;
}

}  // namespace memsoak
