#pragma once

// JSON wire formats for fault profiles, run configuration, and stock-clock
// tables. All files use the record convention: one object per line. Parsing
// is strict; unknown keys fail loudly so config typos never pass silently.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "memsoak/analytics.hpp"
#include "memsoak/device.hpp"
#include "memsoak/faultsim.hpp"
#include "memsoak/patterns.hpp"

namespace memsoak {

namespace detail {

inline void require_keys(const nlohmann::json& j,
                         std::initializer_list<const char*> keys, const char* what) {
    if (!j.is_object())
        throw std::invalid_argument(std::string(what) + " must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        bool known = false;
        for (const char* k : keys) known = known || key == k;
        if (!known)
            throw std::invalid_argument("unknown " + std::string(what) + " key: " + key);
    }
}

}  // namespace detail

inline void to_json(nlohmann::json& j, const StuckAtFault& f) {
    j = nlohmann::json{
        {"address", f.address}, {"mask", f.mask}, {"stuck_value", f.stuck_value}};
}

inline void from_json(const nlohmann::json& j, StuckAtFault& f) {
    detail::require_keys(j, {"address", "mask", "stuck_value"}, "stuck_at fault");
    j.at("address").get_to(f.address);
    j.at("mask").get_to(f.mask);
    j.at("stuck_value").get_to(f.stuck_value);
}

inline void to_json(nlohmann::json& j, const CouplingSpec& c) {
    j = nlohmann::json{{"row_length_words", c.row_length_words},
                       {"victim_offsets", c.victim_offsets},
                       {"p_couple", c.p_couple},
                       {"mode", kCouplingModeName}};
}

inline void from_json(const nlohmann::json& j, CouplingSpec& c) {
    detail::require_keys(j, {"row_length_words", "victim_offsets", "p_couple", "mode"},
                         "coupling");
    if (j.contains("row_length_words")) j.at("row_length_words").get_to(c.row_length_words);
    if (j.contains("victim_offsets")) j.at("victim_offsets").get_to(c.victim_offsets);
    if (j.contains("p_couple")) j.at("p_couple").get_to(c.p_couple);
    if (j.contains("mode")) {
        auto mode = j.at("mode").get<std::string>();
        if (mode != kCouplingModeName)
            throw std::invalid_argument("unsupported coupling mode: " + mode);
    }
}

inline void to_json(nlohmann::json& j, const OverdriveSpec& o) {
    j = nlohmann::json{{"f0_mhz", o.f0_mhz}, {"alpha", o.alpha}, {"gamma", o.gamma}};
}

inline void from_json(const nlohmann::json& j, OverdriveSpec& o) {
    detail::require_keys(j, {"f0_mhz", "alpha", "gamma"}, "overdrive");
    if (j.contains("f0_mhz")) j.at("f0_mhz").get_to(o.f0_mhz);
    if (j.contains("alpha")) j.at("alpha").get_to(o.alpha);
    if (j.contains("gamma")) j.at("gamma").get_to(o.gamma);
}

inline void to_json(nlohmann::json& j, const FaultProfile& p) {
    j = nlohmann::json::object();
    j["stuck_at"] = p.stuck_at;
    j["transient_rate_lambda"] = p.transient_rate_lambda;
    j["coupling"] = p.coupling;
    j["overdrive"] = p.overdrive;
    j["alu_fault_p"] = p.alu_fault_p;
    if (p.scratchpad_profile)
        j["scratchpad_profile"] = *p.scratchpad_profile;
    else
        j["scratchpad_profile"] = nullptr;
    j["seed"] = p.seed;
}

inline void from_json(const nlohmann::json& j, FaultProfile& p) {
    detail::require_keys(j,
                         {"stuck_at", "transient_rate_lambda", "coupling", "overdrive",
                          "alu_fault_p", "scratchpad_profile", "seed"},
                         "fault profile");
    if (j.contains("stuck_at")) j.at("stuck_at").get_to(p.stuck_at);
    if (j.contains("transient_rate_lambda"))
        j.at("transient_rate_lambda").get_to(p.transient_rate_lambda);
    if (j.contains("coupling")) j.at("coupling").get_to(p.coupling);
    if (j.contains("overdrive")) j.at("overdrive").get_to(p.overdrive);
    if (j.contains("alu_fault_p")) j.at("alu_fault_p").get_to(p.alu_fault_p);
    if (j.contains("scratchpad_profile") && !j.at("scratchpad_profile").is_null()) {
        auto sp = std::make_shared<FaultProfile>();
        j.at("scratchpad_profile").get_to(*sp);
        p.scratchpad_profile = std::move(sp);
    }
    if (j.contains("seed")) j.at("seed").get_to(p.seed);
}

// One JSON object per non-empty line, parse errors reported as path:line.
inline std::vector<nlohmann::json> load_json_lines(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("cannot open " + path.string());
    std::vector<nlohmann::json> out;
    std::string line;
    std::uint64_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            nlohmann::json j = nlohmann::json::parse(line);
            if (!j.is_object()) throw std::invalid_argument("not a JSON object");
            out.push_back(std::move(j));
        } catch (const std::exception& e) {
            throw std::invalid_argument(path.string() + ":" + std::to_string(lineno) +
                                        ": " + e.what());
        }
    }
    return out;
}

inline nlohmann::json load_json_object_file(const std::filesystem::path& path,
                                            const char* what) {
    auto lines = load_json_lines(path);
    if (lines.size() != 1)
        throw std::invalid_argument(path.string() + ": expected exactly one " +
                                    std::string(what) + " object, found " +
                                    std::to_string(lines.size()));
    return std::move(lines.front());
}

inline FaultProfile load_fault_profile_file(const std::filesystem::path& path) {
    nlohmann::json j = load_json_object_file(path, "fault profile");
    FaultProfile p;
    try {
        j.get_to(p);
        p.validate();
    } catch (const std::exception& e) {
        throw std::invalid_argument(path.string() + ": " + e.what());
    }
    return p;
}

inline void save_fault_profile_file(const std::filesystem::path& path,
                                    const FaultProfile& p) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::invalid_argument("cannot open " + path.string() + " for write");
    out << nlohmann::json(p).dump() << '\n';
}

inline FleetParams load_fleet_params_file(const std::filesystem::path& path) {
    nlohmann::json j = load_json_object_file(path, "fleet parameter");
    FleetParams p;
    try {
        detail::require_keys(j,
                             {"n_cards", "zero_error_fraction", "mode_pfail", "log_sigma",
                              "tail_fraction", "arch_mix", "arch_pfail_scale",
                              "overclock_fraction", "seed"},
                             "fleet parameter");
        j.get_to(p);
        p.validate();
    } catch (const std::exception& e) {
        throw std::invalid_argument(path.string() + ": " + e.what());
    }
    return p;
}

// Stock-clock tables: one {"device_name": ..., "stock_clocks_mhz": [...]} per line.
inline StockTable load_stock_table_file(const std::filesystem::path& path) {
    StockTable table;
    for (const auto& j : load_json_lines(path)) {
        try {
            detail::require_keys(j, {"device_name", "stock_clocks_mhz"}, "stock table");
            table[j.at("device_name").get<std::string>()] =
                j.at("stock_clocks_mhz").get<std::vector<std::uint32_t>>();
        } catch (const std::exception& e) {
            throw std::invalid_argument(path.string() + ": " + e.what());
        }
    }
    return table;
}

// One test run as launched from the command line. Field names double as the
// config-file keys; flags override whatever the config supplies.
struct RunConfig {
    std::uint64_t region_mib = 32;
    std::uint64_t region_words = 0;  // nonzero overrides region_mib
    std::uint32_t lcg_period = 256;
    std::uint64_t iterations = 20;
    std::uint64_t seed = 1;
    std::string device = "host";  // host | sim
    std::string fault_profile;    // profile path, sim only
    std::uint32_t lane_count = 16;
    std::string out;  // record file; empty = stdout summary only
    std::string card_id = "local";
    bool deployed_profile = false;
    std::int64_t start_utc = 1736121600;
    std::int32_t utc_offset_min = 0;
    bool quiet = false;

    RegionSpec region() const {
        return region_words ? RegionSpec::from_words(region_words)
                            : RegionSpec::from_mib(region_mib);
    }

    void validate() const {
        if (iterations == 0) throw std::invalid_argument("iterations must be at least 1");
        if (device != "host" && device != "sim")
            throw std::invalid_argument("device must be host or sim, not " + device);
        if (!fault_profile.empty() && device != "sim")
            throw std::invalid_argument("fault profiles apply to the sim device only");
        if (lane_count == 0) throw std::invalid_argument("lane count must be at least 1");
        make_cyclic_lcg(lcg_period);
        RegionSpec r = region();
        if (deployed_profile &&
            !(r.whole_mib() && is_deployed_pair(r.mib(), lcg_period)))
            throw std::invalid_argument(
                "region/lcg pair is not a deployed configuration (32/256, 64/512, 128/1024 MiB/period)");
    }
};

inline void to_json(nlohmann::json& j, const RunConfig& c) {
    j = nlohmann::json::object();
    j["region_mib"] = c.region_mib;
    j["region_words"] = c.region_words;
    j["lcg_period"] = c.lcg_period;
    j["iterations"] = c.iterations;
    j["seed"] = c.seed;
    j["device"] = c.device;
    j["fault_profile"] = c.fault_profile;
    j["lane_count"] = c.lane_count;
    j["out"] = c.out;
    j["card_id"] = c.card_id;
    j["deployed_profile"] = c.deployed_profile;
    j["start_utc"] = c.start_utc;
    j["utc_offset_min"] = c.utc_offset_min;
    j["quiet"] = c.quiet;
}

inline void from_json(const nlohmann::json& j, RunConfig& c) {
    detail::require_keys(j,
                         {"region_mib", "region_words", "lcg_period", "iterations",
                          "seed", "device", "fault_profile", "lane_count", "out",
                          "card_id", "deployed_profile", "start_utc", "utc_offset_min",
                          "quiet"},
                         "run config");
    if (j.contains("region_mib")) j.at("region_mib").get_to(c.region_mib);
    if (j.contains("region_words")) j.at("region_words").get_to(c.region_words);
    if (j.contains("lcg_period")) j.at("lcg_period").get_to(c.lcg_period);
    if (j.contains("iterations")) j.at("iterations").get_to(c.iterations);
    if (j.contains("seed")) j.at("seed").get_to(c.seed);
    if (j.contains("device")) j.at("device").get_to(c.device);
    if (j.contains("fault_profile")) j.at("fault_profile").get_to(c.fault_profile);
    if (j.contains("lane_count")) j.at("lane_count").get_to(c.lane_count);
    if (j.contains("out")) j.at("out").get_to(c.out);
    if (j.contains("card_id")) j.at("card_id").get_to(c.card_id);
    if (j.contains("deployed_profile")) j.at("deployed_profile").get_to(c.deployed_profile);
    if (j.contains("start_utc")) j.at("start_utc").get_to(c.start_utc);
    if (j.contains("utc_offset_min")) j.at("utc_offset_min").get_to(c.utc_offset_min);
    if (j.contains("quiet")) j.at("quiet").get_to(c.quiet);
}

inline RunConfig load_run_config_file(const std::filesystem::path& path) {
    nlohmann::json j = load_json_object_file(path, "run config");
    RunConfig c;
    try {
        j.get_to(c);
    } catch (const std::exception& e) {
        throw std::invalid_argument(path.string() + ": " + e.what());
    }
    return c;
}

}  // namespace memsoak
