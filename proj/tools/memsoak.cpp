// Command-line front end: host-RAM soak runs, fault-model simulations, clock
// sweeps, fleet campaigns, analytics, and plot-ready exports.
//
// Exit codes: 0 clean, 1 memory errors detected, 2 usage or config error,
// 3 runtime failure. Every subcommand that takes --seed produces byte-identical
// output for identical invocations.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "memsoak/analytics.hpp"
#include "memsoak/coalesce.hpp"
#include "memsoak/config.hpp"
#include "memsoak/device.hpp"
#include "memsoak/faultsim.hpp"
#include "memsoak/fleet.hpp"
#include "memsoak/records.hpp"
#include "memsoak/sweep.hpp"
#include "memsoak/testkit.hpp"

namespace {

using namespace memsoak;
using ull = unsigned long long;

std::unique_ptr<MemoryDevice> make_device(const RunConfig& rc) {
    DeviceCapabilities caps;
    caps.region = rc.region();
    caps.lane_count = rc.lane_count;
    try {
        if (rc.device == "host") return std::make_unique<HostBufferDevice>(std::move(caps));
        caps.device_name = "sim-device";
        FaultProfile profile;
        if (!rc.fault_profile.empty()) profile = load_fault_profile_file(rc.fault_profile);
        if (profile.seed == 0) profile.seed = rc.seed;
        return std::make_unique<SimDevice>(std::move(caps), std::move(profile));
    } catch (const std::bad_alloc&) {
    } catch (const std::length_error&) {
    }
    throw std::runtime_error("cannot allocate region of " +
                             std::to_string(rc.region().word_count) + " words");
}

int cmd_test(const RunConfig& rc) {
    rc.validate();
    auto dev = make_device(rc);
    std::ofstream out;
    if (!rc.out.empty()) {
        out.open(rc.out, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + rc.out + " for write");
    }

    IterationConfig ic;
    ic.card_id = rc.card_id;
    ic.lcg_period = rc.lcg_period;
    ic.seed = rc.seed;
    ic.utc_offset_min = rc.utc_offset_min;
    M20Cursor cursor;
    std::uint64_t failures = 0;
    std::array<std::uint64_t, kTestCodeCount> totals{};
    for (std::uint64_t i = 0; i < rc.iterations; ++i) {
        ic.iteration_index = i;
        ic.start_utc = rc.start_utc + static_cast<std::int64_t>(i) * kIterationSeconds;
        IterationRecord rec = run_iteration(*dev, ic, cursor);
        failures += rec.failed;
        for (std::size_t t = 0; t < kTestCodeCount; ++t) totals[t] += rec.errors[t];
        if (out) out << serialize_record(rec) << '\n';
    }

    if (!rc.quiet) {
        const auto& caps = dev->caps();
        if (caps.region.whole_mib())
            std::printf("device %s: region %llu MiB, lcg period %u, seed %llu\n",
                        caps.device_name.c_str(), (ull)caps.region.mib(), rc.lcg_period,
                        (ull)rc.seed);
        else
            std::printf("device %s: region %llu words, lcg period %u, seed %llu\n",
                        caps.device_name.c_str(), (ull)caps.region.word_count,
                        rc.lcg_period, (ull)rc.seed);
        std::printf("iterations %llu, failures %llu\n", (ull)rc.iterations, (ull)failures);
        std::printf("errors:");
        for (std::size_t t = 0; t < kTestCodeCount; ++t)
            std::printf(" %s=%llu", to_string(all_test_codes[t]), (ull)totals[t]);
        std::printf("\n");
        if (!rc.out.empty()) std::printf("records: %s\n", rc.out.c_str());
    }
    return failures ? 1 : 0;
}

struct SweepCli {
    std::vector<double> clocks = default_sweep_clocks();
    std::uint64_t iterations = 20;
    std::uint32_t pool = 5;
    std::string profile_path;
    std::string out;
    std::string device = "sim";
};

void print_sweep_table(const SweepResult& res, std::uint64_t region_words) {
    std::printf("%10s", "clock_mhz");
    for (TestCode c : all_test_codes) std::printf(" %9s", to_string(c));
    std::printf("\n");
    for (const auto& pt : res.points) {
        std::printf("%10.1f", pt.memory_clock_mhz);
        for (std::size_t t = 0; t < kTestCodeCount; ++t) {
            if (pt.total_errors[t] == 0)
                std::printf(" %9s", "-");
            else
                std::printf(" %9.3g",
                            pt.mean_errors[t] / static_cast<double>(region_words));
        }
        std::printf("\n");
    }
    std::printf("%10s", "onset_mhz");
    for (double f : res.onset_mhz) {
        if (std::isinf(f))
            std::printf(" %9s", "-");
        else
            std::printf(" %9.1f", f);
    }
    std::printf("\n");
}

void write_sweep_csv(const std::string& path, const SweepResult& res,
                     std::uint64_t region_words) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path + " for write");
    out << "clock_mhz";
    for (TestCode c : all_test_codes) out << ',' << to_string(c);
    out << '\n';
    char buf[64];
    for (const auto& pt : res.points) {
        std::snprintf(buf, sizeof buf, "%.10g", pt.memory_clock_mhz);
        out << buf;
        for (std::size_t t = 0; t < kTestCodeCount; ++t) {
            std::snprintf(buf, sizeof buf, "%.10g",
                          pt.mean_errors[t] / static_cast<double>(region_words));
            out << ',' << buf;
        }
        out << '\n';
    }
}

int cmd_sweep(const RunConfig& rc, const SweepCli& sc) {
    if (sc.device == "host")
        throw std::invalid_argument(
            "cannot set host memory clocks; sweeps need --device sim");
    if (sc.device != "sim")
        throw std::invalid_argument("device must be host or sim, not " + sc.device);
    if (sc.pool == 0) throw std::invalid_argument("seed pool must be at least 1");

    SweepConfig cfg;
    cfg.clocks_mhz = sc.clocks;
    cfg.iterations_per_clock = sc.iterations;
    cfg.seeds.clear();
    for (std::uint32_t i = 0; i < sc.pool; ++i) cfg.seeds.push_back(rc.seed + i);
    cfg.region_words = rc.region().word_count;
    cfg.lcg_period = rc.lcg_period;
    cfg.base_caps.lane_count = rc.lane_count;
    cfg.base_caps.device_name = "sim-device";
    if (!sc.profile_path.empty())
        cfg.profile = load_fault_profile_file(sc.profile_path);
    else
        cfg.profile.overdrive = tuned_overdrive();

    SweepResult res = run_sweep(cfg);
    if (!rc.quiet) print_sweep_table(res, cfg.region_words);
    if (!sc.out.empty()) write_sweep_csv(sc.out, res, cfg.region_words);
    return 0;
}

struct FleetCli {
    std::uint64_t cards = 0;
    std::uint64_t iterations = 1;
    std::string mode = "bernoulli";
    std::string params_path;
    std::string out;
    std::uint32_t workers = 1;
    std::int64_t start_utc = 1736121600;
};

int cmd_fleet(const RunConfig& rc, const FleetCli& fc, bool seed_given, bool cards_given) {
    FleetParams params;
    if (!fc.params_path.empty()) {
        params = load_fleet_params_file(fc.params_path);
        if (seed_given) params.seed = rc.seed;
    } else {
        params.seed = rc.seed;
    }
    if (cards_given) params.n_cards = fc.cards;

    CampaignParams cp;
    cp.iterations_per_card = fc.iterations;
    cp.mode = campaign_mode_from_string(fc.mode);
    cp.seed = params.seed;
    cp.geometry.region_words = rc.region().word_count;
    cp.lcg_period = rc.lcg_period;
    cp.start_utc = fc.start_utc;
    cp.workers = fc.workers;

    auto fleet = sample_fleet(params, cp.mode, cp.geometry);
    std::uint64_t appended = run_campaign_to_file(fleet, cp, fc.out);
    if (!rc.quiet) {
        std::uint64_t total = fleet.size() * cp.iterations_per_card;
        std::printf("fleet %s: %llu cards x %llu iterations -> %s (%llu appended, %llu kept)\n",
                    to_string(cp.mode), (ull)fleet.size(), (ull)cp.iterations_per_card,
                    fc.out.c_str(), (ull)appended, (ull)(total - appended));
    }
    return 0;
}

struct AnalyzeCli {
    std::vector<std::string> inputs;
    std::vector<std::uint64_t> cutoffs = {1, 50000, 300000, 1000000};
    std::vector<std::string> hypotheses;
    bool mi_matrix = false;
    std::string stock_table_path;
    std::size_t bins = kPfailBins;
};

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void print_mi_matrix(const TestMiMatrix& m) {
    std::printf("test MI ratios, I(col;row)/H(col):\n%5s", "");
    for (TestCode c : all_test_codes) std::printf(" %7s", to_string(c));
    std::printf("\n");
    for (std::size_t y = 0; y < kTestCodeCount; ++y) {
        std::printf("%5s", to_string(all_test_codes[y]));
        for (std::size_t x = 0; x < kTestCodeCount; ++x) {
            if (std::isnan(m.ratio[y][x]))
                std::printf(" %7s", "nan");
            else
                std::printf(" %7.4f", m.ratio[y][x]);
        }
        std::printf("\n");
    }
}

int cmd_analyze(const RunConfig& rc, const AnalyzeCli& ac) {
    std::vector<std::filesystem::path> paths(ac.inputs.begin(), ac.inputs.end());
    Dataset d = load_dataset(paths);
    if (!rc.quiet)
        std::printf("dataset: %llu records, %llu cards\n", (ull)d.record_count,
                    (ull)d.cards.size());

    std::vector<std::uint64_t> cutoffs = ac.cutoffs;
    std::sort(cutoffs.begin(), cutoffs.end());
    cutoffs.erase(std::unique(cutoffs.begin(), cutoffs.end()), cutoffs.end());

    bool any = false;
    for (std::uint64_t c : cutoffs) {
        auto est = card_pfail(d, c);
        if (est.empty()) {
            std::printf("cutoff %llu: no cards\n", (ull)c);
            continue;
        }
        any = true;
        std::vector<double> p;
        std::uint64_t zero = 0;
        for (const auto& e : est) {
            p.push_back(e.p_fail);
            zero += e.failures == 0;
        }
        double mean = 0.0;
        for (double x : p) mean += x;
        mean /= static_cast<double>(p.size());
        Histogram h = pfail_histogram(est, ac.bins);
        std::printf(
            "cutoff %llu: %llu cards, zero-failure share %.4f, mean p_fail %.6g, "
            "median %.6g, H(p_fail) %s bits\n",
            (ull)c, (ull)est.size(),
            static_cast<double>(zero) / static_cast<double>(est.size()), mean,
            median_of(p), format_bits(entropy(h)).c_str());
    }
    if (!any) throw std::runtime_error("no cards pass cutoff");

    if (!ac.hypotheses.empty() || ac.mi_matrix) {
        StockTable table = ac.stock_table_path.empty()
                               ? default_stock_table()
                               : load_stock_table_file(ac.stock_table_path);
        for (const auto& hs : ac.hypotheses) {
            Hypothesis hyp = hypothesis_from_string(hs);
            HypothesisReport rep = hypothesis_report(d, hyp, table, cutoffs.front(), ac.bins);
            std::printf("hypothesis %s (%s): H(dataset) %s bits, gain %s bits, "
                        "perfect-split gain %s bits\n",
                        to_string(hyp), rep.indicator.c_str(),
                        format_bits(rep.h_dataset).c_str(), format_bits(rep.gain).c_str(),
                        format_bits(rep.perfect_gain).c_str());
            std::printf("  subsets:");
            for (const auto& [label, n] : rep.subset_sizes)
                std::printf(" %s=%llu", label.c_str(), (ull)n);
            std::printf(" excluded=%llu\n", (ull)rep.excluded);
        }
        if (ac.mi_matrix) print_mi_matrix(test_mi_matrix(d));
    }
    return 0;
}

struct CoalesceCli {
    std::uint64_t region_words = 81920;
    std::string mapping = "packed";
    bool all = false;
};

int cmd_coalesce(const CoalesceCli& cc) {
    std::vector<M20Mapping> mappings;
    if (cc.all)
        mappings = {M20Mapping::packed, M20Mapping::sweep_split, M20Mapping::sweep_fused};
    else
        mappings = {m20_mapping_from_string(cc.mapping)};
    for (M20Mapping m : mappings) {
        TrafficReport rep = traffic_report(cc.region_words, m);
        std::printf("mapping %-11s g80 %llu txns %llu bytes, gt200 %llu txns %llu bytes, "
                    "byte ratio %.6f\n",
                    to_string(m), (ull)rep.g80.transactions, (ull)rep.g80.bytes,
                    (ull)rep.gt200.transactions, (ull)rep.gt200.bytes, rep.byte_ratio);
    }
    return 0;
}

struct ReportCli {
    std::vector<std::string> records;
    std::string out_dir = ".";
    std::vector<std::uint64_t> cutoffs = {1, 50000, 300000, 1000000};
    std::size_t bins = kPfailBins;
    std::string sweep_in;
};

std::string fmt10g(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

int cmd_report(const RunConfig& rc, const ReportCli& pc) {
    std::vector<std::filesystem::path> paths(pc.records.begin(), pc.records.end());
    Dataset d = load_dataset(paths);
    std::filesystem::create_directories(pc.out_dir);

    std::vector<std::uint64_t> cutoffs = pc.cutoffs;
    std::sort(cutoffs.begin(), cutoffs.end());
    cutoffs.erase(std::unique(cutoffs.begin(), cutoffs.end()), cutoffs.end());

    std::vector<std::pair<std::uint64_t, std::vector<CardEstimate>>> kept;
    for (std::uint64_t c : cutoffs) {
        auto est = card_pfail(d, c);
        if (est.empty())
            std::fprintf(stderr, "note: cutoff %llu keeps no cards, column omitted\n",
                         (ull)c);
        else
            kept.emplace_back(c, std::move(est));
    }
    if (kept.empty()) throw std::runtime_error("no cards pass cutoff");

    auto open_out = [&](const char* name) {
        std::filesystem::path p = std::filesystem::path(pc.out_dir) / name;
        std::ofstream out(p, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + p.string() + " for write");
        return out;
    };

    // CDF over the union of observed estimates so every step is visible.
    {
        std::vector<double> grid{0.0, 1.0};
        for (const auto& [c, est] : kept)
            for (const auto& e : est) grid.push_back(e.p_fail);
        std::sort(grid.begin(), grid.end());
        grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

        std::vector<std::vector<double>> cols;
        for (const auto& [c, est] : kept) cols.push_back(empirical_cdf(est, grid));

        auto out = open_out("cdf.csv");
        out << "p_fail";
        for (const auto& [c, est] : kept) out << ",cutoff_" << c;
        out << '\n';
        for (std::size_t i = 0; i < grid.size(); ++i) {
            out << fmt10g(grid[i]);
            for (const auto& col : cols) out << ',' << fmt10g(col[i]);
            out << '\n';
        }
    }

    // PMF over the fixed estimator bins.
    {
        std::vector<Histogram> hists;
        for (const auto& [c, est] : kept) hists.push_back(pfail_histogram(est, pc.bins));
        auto out = open_out("pmf.csv");
        out << "bin_lo,bin_hi";
        for (const auto& [c, est] : kept) out << ",cutoff_" << c;
        out << '\n';
        std::vector<std::vector<double>> mass;
        for (const auto& h : hists) mass.push_back(h.mass());
        for (std::size_t b = 0; b < pc.bins; ++b) {
            out << fmt10g(hists.front().bin_edges[b]) << ','
                << fmt10g(hists.front().bin_edges[b + 1]);
            for (const auto& m : mass) out << ',' << fmt10g(m[b]);
            out << '\n';
        }
    }

    {
        TestMiMatrix m = test_mi_matrix(d);
        auto out = open_out("mi_matrix.csv");
        out << "test";
        for (TestCode c : all_test_codes) out << ',' << to_string(c);
        out << '\n';
        for (std::size_t y = 0; y < kTestCodeCount; ++y) {
            out << to_string(all_test_codes[y]);
            for (std::size_t x = 0; x < kTestCodeCount; ++x)
                out << ',' << (std::isnan(m.ratio[y][x]) ? "nan" : fmt10g(m.ratio[y][x]));
            out << '\n';
        }
    }

    if (!pc.sweep_in.empty()) {
        std::ifstream in(pc.sweep_in, std::ios::binary);
        if (!in)
            throw std::runtime_error("sweep input " + pc.sweep_in + ": cannot open");
        std::string header;
        std::getline(in, header);
        if (header.rfind("clock_mhz", 0) != 0)
            throw std::runtime_error("sweep input " + pc.sweep_in +
                                     ": unrecognized table header");
        auto out = open_out("sweep.csv");
        out << header << '\n' << in.rdbuf();
    }

    if (!rc.quiet)
        std::printf("report written to %s (cdf.csv, pmf.csv, mi_matrix.csv%s)\n",
                    pc.out_dir.c_str(), pc.sweep_in.empty() ? "" : ", sweep.csv");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    RunConfig rc;
    // The config file only seeds defaults, so it is loaded before CLI11 binds
    // flag storage; any flag then overrides it.
    try {
        for (int i = 1; i < argc; ++i) {
            std::string a = argv[i];
            if (a == "--") break;
            if (a == "--config" && i + 1 < argc) {
                rc = load_run_config_file(argv[i + 1]);
                break;
            }
            if (a.rfind("--config=", 0) == 0) {
                rc = load_run_config_file(a.substr(9));
                break;
            }
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }

    CLI::App app{
        "memory soak testing, fault simulation, clock sweeps, fleet campaigns, "
        "and analytics"};
    app.require_subcommand(1);
    std::string config_path;
    app.add_option("--config", config_path,
                   "JSON run config (one object on one line); flags override it");
    auto* seed_opt = app.add_option("--seed", rc.seed, "base RNG seed");
    app.add_flag("--quiet", rc.quiet, "suppress summary output");

    auto* test = app.add_subcommand("test", "run memory test iterations on a device");
    test->fallthrough();
    test->add_option("--region-mib", rc.region_mib, "region size in MiB");
    test->add_option("--region-words", rc.region_words,
                     "region size in words (overrides --region-mib)");
    test->add_option("--lcg-period", rc.lcg_period, "logic-test LCG period");
    test->add_option("--iterations", rc.iterations, "iterations to run");
    test->add_option("--device", rc.device, "host | sim");
    test->add_option("--fault-profile", rc.fault_profile, "fault profile JSON (sim only)");
    test->add_option("--lane-count", rc.lane_count, "parallel lane count");
    test->add_option("--out", rc.out, "write iteration records here (JSONL)");
    test->add_option("--card-id", rc.card_id, "card id stamped into records");
    test->add_flag("--deployed-profile", rc.deployed_profile,
                   "require a deployed region/period pairing");
    test->add_option("--start-utc", rc.start_utc, "timestamp of the first iteration");
    test->add_option("--utc-offset-min", rc.utc_offset_min, "local time offset, minutes");

    SweepCli sc;
    auto* sweep = app.add_subcommand("sweep", "word error rates across memory clocks");
    sweep->fallthrough();
    sweep->add_option("--clocks", sc.clocks, "memory clocks in MHz")->delimiter(',');
    sweep->add_option("--iterations", sc.iterations, "iterations per clock");
    sweep->add_option("--pool", sc.pool, "number of seeds pooled per clock");
    sweep->add_option("--profile", sc.profile_path,
                      "fault profile JSON (default: tuned overdrive)");
    sweep->add_option("--out", sc.out, "write the rate table as CSV");
    sweep->add_option("--device", sc.device, "sim (host is refused)");
    sweep->add_option("--region-mib", rc.region_mib, "region size in MiB");
    sweep->add_option("--region-words", rc.region_words,
                      "region size in words (overrides --region-mib)");
    sweep->add_option("--lcg-period", rc.lcg_period, "logic-test LCG period");
    sweep->add_option("--lane-count", rc.lane_count, "parallel lane count");

    FleetCli fc;
    auto* fleet = app.add_subcommand("fleet", "synthesize a fleet campaign record file");
    fleet->fallthrough();
    auto* cards_opt = fleet->add_option("--cards", fc.cards, "number of cards");
    fleet->add_option("--iterations", fc.iterations, "iterations per card");
    fleet->add_option("--mode", fc.mode, "bernoulli | device");
    fleet->add_option("--params", fc.params_path, "fleet parameter JSON");
    fleet->add_option("--out", fc.out, "record file (resumable)")->required();
    fleet->add_option("--workers", fc.workers, "worker shards (output is identical)");
    fleet->add_option("--start-utc", fc.start_utc, "campaign epoch");
    fleet->add_option("--region-mib", rc.region_mib, "region size in MiB");
    fleet->add_option("--region-words", rc.region_words,
                      "region size in words (overrides --region-mib)");
    fleet->add_option("--lcg-period", rc.lcg_period, "logic-test LCG period");

    AnalyzeCli ac;
    auto* analyze = app.add_subcommand("analyze", "summarize record files");
    analyze->fallthrough();
    analyze->add_option("--in", ac.inputs, "record files (JSONL)")->required();
    analyze->add_option("--cutoff", ac.cutoffs, "minimum iterations per card");
    analyze->add_option("--hypothesis", ac.hypotheses,
                        "overclock | daynight | architecture (repeatable)");
    analyze->add_flag("--mi-matrix", ac.mi_matrix, "print the test MI ratio matrix");
    analyze->add_option("--stock-table", ac.stock_table_path,
                        "stock clock table (one object per line)");
    analyze->add_option("--bins", ac.bins, "p_fail histogram bins");

    CoalesceCli cc;
    auto* coalesce = app.add_subcommand("coalesce", "memory transaction traffic report");
    coalesce->fallthrough();
    coalesce->add_option("--region-words", cc.region_words, "region size in words");
    coalesce->add_option("--mapping", cc.mapping, "packed | sweep-split | sweep-fused");
    coalesce->add_flag("--all-mappings", cc.all, "report every mapping");

    ReportCli pc;
    auto* report = app.add_subcommand("report", "write plot-ready CSV tables");
    report->fallthrough();
    report->add_option("--records", pc.records, "record files (JSONL)")->required();
    report->add_option("--out-dir", pc.out_dir, "output directory");
    report->add_option("--cutoff", pc.cutoffs, "minimum iterations per card");
    report->add_option("--bins", pc.bins, "PMF bins");
    report->add_option("--sweep-in", pc.sweep_in, "sweep CSV to pass through");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (test->parsed()) return cmd_test(rc);
        if (sweep->parsed()) return cmd_sweep(rc, sc);
        if (fleet->parsed())
            return cmd_fleet(rc, fc, seed_opt->count() > 0, cards_opt->count() > 0);
        if (analyze->parsed()) return cmd_analyze(rc, ac);
        if (coalesce->parsed()) return cmd_coalesce(cc);
        if (report->parsed()) return cmd_report(rc, pc);
    } catch (const std::bad_alloc&) {
        std::fprintf(stderr, "error: cannot allocate region\n");
        return 3;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return 2;
}
