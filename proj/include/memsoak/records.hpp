#pragma once

// Line-delimited record file IO. One iteration per line, flat JSON object,
// fixed key order so identical campaigns serialize byte-identically.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "memsoak/test_codes.hpp"
#include "memsoak/testkit.hpp"

namespace memsoak {

inline std::string error_key(TestCode code) {
    return std::string("err_") + to_string(code);
}

inline std::string serialize_record(const IterationRecord& r) {
    nlohmann::ordered_json j;
    j["schema_version"] = r.schema_version;
    j["card_id"] = r.card_id;
    j["device_name"] = r.device_name;
    j["architecture"] = r.architecture;
    j["region_mib"] = r.region_mib;
    j["lcg_period"] = r.lcg_period;
    j["shader_clock_mhz"] = r.shader_clock_mhz;
    j["memory_clock_mhz"] = r.memory_clock_mhz;
    j["start_utc"] = r.start_utc;
    j["end_utc"] = r.end_utc;
    j["utc_offset_min"] = r.utc_offset_min;
    for (TestCode c : all_test_codes) j[error_key(c)] = r.errors[index_of(c)];
    j["failed"] = r.failed;
    return j.dump();
}

inline IterationRecord parse_record(const std::string& line) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("bad record line: ") + e.what());
    }
    if (!j.is_object()) throw std::runtime_error("bad record line: not an object");

    IterationRecord r;
    try {
        j.at("schema_version").get_to(r.schema_version);
        if (r.schema_version != 1)
            throw std::runtime_error("unsupported schema_version " +
                                     std::to_string(r.schema_version));
        j.at("card_id").get_to(r.card_id);
        j.at("device_name").get_to(r.device_name);
        j.at("architecture").get_to(r.architecture);
        j.at("region_mib").get_to(r.region_mib);
        j.at("lcg_period").get_to(r.lcg_period);
        j.at("shader_clock_mhz").get_to(r.shader_clock_mhz);
        j.at("memory_clock_mhz").get_to(r.memory_clock_mhz);
        j.at("start_utc").get_to(r.start_utc);
        j.at("end_utc").get_to(r.end_utc);
        j.at("utc_offset_min").get_to(r.utc_offset_min);
        for (TestCode c : all_test_codes) j.at(error_key(c)).get_to(r.errors[index_of(c)]);
        j.at("failed").get_to(r.failed);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("bad record line: ") + e.what());
    }
    if (j.size() != 12 + kTestCodeCount)
        throw std::runtime_error("bad record line: unexpected extra keys");

    try {
        arch_from_string(r.architecture);  // reject unknown names
    } catch (const std::invalid_argument& e) {
        throw std::runtime_error(std::string("bad record line: ") + e.what());
    }
    bool any_error = false;
    for (auto e : r.errors) any_error = any_error || e > 0;
    if (r.failed != any_error)
        throw std::runtime_error("bad record line: failed flag disagrees with error counts");
    if (r.end_utc < r.start_utc) throw std::runtime_error("bad record line: negative duration");
    return r;
}

inline void write_record_file(const std::filesystem::path& path,
                              const std::vector<IterationRecord>& records) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    for (const auto& r : records) out << serialize_record(r) << '\n';
    out.flush();
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline std::vector<IterationRecord> load_record_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::vector<IterationRecord> records;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            records.push_back(parse_record(line));
        } catch (const std::exception& e) {
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " +
                                     e.what());
        }
    }
    return records;
}

// Prepares a record file for appending. A crashed writer can leave a partial
// final line (no terminating newline); that tail is cut off. Complete lines
// must parse, otherwise the file is treated as corrupt and rejected.
inline std::vector<IterationRecord> resume_record_file(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) return {};
    std::string content;
    {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("cannot open " + path.string());
        std::ostringstream ss;
        ss << in.rdbuf();
        content = ss.str();
    }
    std::size_t keep = content.rfind('\n');
    keep = (keep == std::string::npos) ? 0 : keep + 1;
    if (keep != content.size()) {
        content.resize(keep);
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << content;
        if (!out) throw std::runtime_error("truncate failed: " + path.string());
    }
    return load_record_file(path);
}

}  // namespace memsoak
