#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "memsoak/analytics.hpp"
#include "memsoak/fleet.hpp"
#include "memsoak/rng.hpp"

using namespace memsoak;
namespace fs = std::filesystem;

namespace {

IterationRecord make_record(const std::string& card_id, bool failed,
                            std::int64_t start = 1736121600, std::int32_t offset = 0) {
    IterationRecord r;
    r.card_id = card_id;
    r.device_name = "GeForce 8800 GTX";
    r.architecture = "G80";
    r.region_mib = 32;
    r.lcg_period = 512;
    r.shader_clock_mhz = 1350;
    r.memory_clock_mhz = 400;
    r.start_utc = start;
    r.end_utc = start + 3;
    r.utc_offset_min = offset;
    if (failed) r.errors[index_of(TestCode::m20)] = 1;
    r.failed = failed;
    return r;
}

CardEstimate est(double p, std::uint64_t failures = 0) {
    CardEstimate e;
    e.iterations = 100;
    e.failures = failures ? failures : (p > 0 ? 1 : 0);
    e.p_fail = p;
    return e;
}

}  // namespace

TEST_CASE("entropy check values") {
    CHECK(entropy(std::vector<double>{0.5, 0.5}) == 1.0);
    CHECK(entropy(std::vector<double>(8, 0.125)) == 3.0);
    CHECK(entropy(std::vector<double>{1.0, 0.0, 0.0}) == 0.0);
    for (std::size_t n : {2u, 4u, 16u, 64u, 256u})
        CHECK(entropy(std::vector<double>(n, 1.0 / n)) ==
              Catch::Approx(std::log2(double(n))).margin(1e-12));
    // binary entropy of a one-third split
    double h = entropy(std::vector<double>{1.0 / 3.0, 2.0 / 3.0});
    CHECK(h == Catch::Approx(0.9182958).margin(5e-8));
    CHECK_THROWS_AS(entropy(std::vector<double>{-0.1, 1.1}), std::invalid_argument);
}

TEST_CASE("mutual information check values") {
    using J = std::vector<std::vector<double>>;
    CHECK(mutual_information(J{{0.25, 0.25}, {0.25, 0.25}}) == 0.0);
    CHECK(mutual_information(J{{0.5, 0.0}, {0.0, 0.5}}) == 1.0);
    CHECK(mutual_information(J{{0.4, 0.1}, {0.1, 0.4}}) ==
          Catch::Approx(0.2780719).margin(5e-8));
    CHECK_THROWS_AS(mutual_information(J{{0.5, 0.4}}), std::invalid_argument);
    CHECK_THROWS_AS(mutual_information(J{{0.5, 0.6}, {0.2}}), std::invalid_argument);
}

TEST_CASE("mutual information is exactly symmetric and bounded") {
    RandomStream rs(99, 0x6d69u);
    for (int trial = 0; trial < 2000; ++trial) {
        const std::size_t rows = 2 + rs.next_range(4), cols = 2 + rs.next_range(4);
        std::vector<std::vector<double>> j(rows, std::vector<double>(cols, 0.0));
        double total = 0.0;
        for (auto& row : j)
            for (auto& p : row) {
                p = rs.next_range(8) == 0 ? 0.0 : rs.next_unit();
                total += p;
            }
        if (total == 0.0) {
            j[0][0] = total = 1.0;
        }
        for (auto& row : j)
            for (auto& p : row) p /= total;

        std::vector<std::vector<double>> t(cols, std::vector<double>(rows));
        std::vector<double> px(rows, 0.0), py(cols, 0.0);
        for (std::size_t x = 0; x < rows; ++x)
            for (std::size_t y = 0; y < cols; ++y) {
                t[y][x] = j[x][y];
                px[x] += j[x][y];
                py[y] += j[x][y];
            }
        const double i = mutual_information(j);
        CHECK(i == mutual_information(t));  // bitwise equal by sorted accumulation
        CHECK(i >= 0.0);
        CHECK(i <= std::min(entropy(px), entropy(py)) + 1e-12);
    }
}

TEST_CASE("histogram binning") {
    auto h = make_histogram({0.0, 0.25, 1.0}, {0.0, 0.5});
    REQUIRE(h.counts.size() == 2);
    CHECK(h.counts[0] == 1);
    CHECK(h.counts[1] == 1);
    CHECK(h.mass() == std::vector<double>{0.5, 0.5});

    // top edge closes the last bin; outside values are dropped
    h = make_histogram({0.0, 0.5, 1.0}, {1.0, 0.5, -0.1, 1.1});
    CHECK(h.total == 2);
    CHECK(h.counts[1] == 2);

    CHECK_THROWS_AS(make_histogram({1.0, 0.0}, {0.5}), std::invalid_argument);

    auto ph = pfail_histogram({est(0.0), est(1.0), est(0.9995)}, 1000);
    CHECK(ph.counts[0] == 1);
    CHECK(ph.counts[999] == 2);
}

TEST_CASE("cdf and pmf over estimates") {
    std::vector<CardEstimate> zeros = {est(0.0), est(0.0)};
    CHECK(empirical_cdf(zeros, {0.0}) == std::vector<double>{1.0});

    std::vector<CardEstimate> mixed = {est(0.0), est(0.0), est(0.5), est(1.0)};
    auto cdf = empirical_cdf(mixed, {0.0, 0.25, 0.5, 1.0});
    CHECK(cdf == std::vector<double>{0.5, 0.5, 0.75, 1.0});

    auto pmf = empirical_pmf(mixed, {0.0, 0.25, 1.0});
    CHECK(pmf.mass() == std::vector<double>{0.5, 0.5});

    CHECK_THROWS_AS(empirical_cdf({}, {0.0}), std::invalid_argument);
}

TEST_CASE("dataset loading and card estimates") {
    std::vector<IterationRecord> recs;
    for (int i = 0; i < 300; ++i) recs.push_back(make_record("card-000001", i < 3));
    for (int i = 0; i < 299; ++i) recs.push_back(make_record("card-000002", false));
    auto d = group_records(recs);
    CHECK(d.record_count == 599);
    REQUIRE(d.cards.size() == 2);

    auto all = card_pfail(d, 1);
    REQUIRE(all.size() == 2);
    CHECK(all[0].p_fail == Catch::Approx(0.01));
    CHECK(all[1].p_fail == 0.0);

    auto cut = card_pfail(d, 300);  // 299 iterations misses the cutoff
    REQUIRE(cut.size() == 1);
    CHECK(cut[0].card_id == "card-000001");
    CHECK_THROWS_AS(card_pfail(d, 0), std::invalid_argument);
}

TEST_CASE("dataset files merge independently of splitting") {
    FleetParams fp;
    fp.n_cards = 12;
    fp.zero_error_fraction = 0.4;
    fp.mode_pfail = 0.3;
    fp.seed = 8;
    CampaignParams cp;
    cp.iterations_per_card = 20;
    cp.seed = 4;
    auto recs = run_campaign(sample_fleet(fp), cp);

    auto whole = fs::temp_directory_path() / "memsoak_whole.jsonl";
    auto part_a = fs::temp_directory_path() / "memsoak_part_a.jsonl";
    auto part_b = fs::temp_directory_path() / "memsoak_part_b.jsonl";
    write_record_file(whole, recs);
    std::vector<IterationRecord> a, b;
    for (std::size_t i = 0; i < recs.size(); ++i) (i % 3 == 0 ? b : a).push_back(recs[i]);
    write_record_file(part_a, a);
    write_record_file(part_b, b);

    auto d1 = load_records(whole);
    auto d2 = load_dataset({part_a, part_b});
    CHECK(d1.record_count == recs.size());
    CHECK(d2.record_count == recs.size());
    REQUIRE(d1.cards.size() == d2.cards.size());
    auto e1 = card_pfail(d1, 1), e2 = card_pfail(d2, 1);
    REQUIRE(e1.size() == e2.size());
    for (std::size_t i = 0; i < e1.size(); ++i) {
        CHECK(e1[i].card_id == e2[i].card_id);
        CHECK(e1[i].failures == e2[i].failures);
        CHECK(e1[i].iterations == e2[i].iterations);
    }
    // empty file ingests as an empty dataset
    auto empty = fs::temp_directory_path() / "memsoak_empty.jsonl";
    std::ofstream(empty).close();
    CHECK(load_records(empty).cards.empty());

    // a consistency violation is reported with its line number
    {
        std::ofstream out(whole, std::ios::binary | std::ios::app);
        std::string bad = serialize_record(make_record("card-000099", true));
        auto pos = bad.find("\"failed\":true");
        REQUIRE(pos != std::string::npos);
        bad.replace(pos, 13, "\"failed\":false");
        out << bad << '\n';
    }
    try {
        load_records(whole);
        FAIL("expected a consistency error");
    } catch (const std::runtime_error& e) {
        const std::string what = e.what();
        CHECK(what.find(":" + std::to_string(recs.size() + 1) + ":") != std::string::npos);
        CHECK(what.find("failed") != std::string::npos);
    }
    fs::remove(whole);
    fs::remove(part_a);
    fs::remove(part_b);
    fs::remove(empty);
}

TEST_CASE("information gain and the perfect indicator identity") {
    // 100 clean cards at p = 0, 200 failing at p = 0.5: the zero/nonzero
    // split recovers the full binary label entropy
    std::vector<CardEstimate> estimates;
    for (int i = 0; i < 100; ++i) estimates.push_back(est(0.0));
    for (int i = 0; i < 200; ++i) estimates.push_back(est(0.5, 50));
    auto ig = information_gain(perfect_partition(estimates));
    CHECK(ig.h_dataset == Catch::Approx(0.9182958).margin(5e-8));
    CHECK(ig.gain == Catch::Approx(ig.h_dataset).margin(1e-12));

    // a label independent of p_fail explains almost nothing
    RandomStream rs(5, 0x696e64u);
    IndicatorPartition random_part;
    random_part.indicator = "random";
    std::vector<CardEstimate> spread;
    for (int i = 0; i < 4000; ++i)
        spread.push_back(est(0.1 * static_cast<double>(rs.next_range(10))));
    for (auto& e : spread)
        random_part.subsets[rs.next() & 1 ? "A" : "B"].push_back(e);
    auto rig = information_gain(random_part);
    CHECK(rig.gain >= 0.0);
    CHECK(rig.gain < 0.02);
    CHECK(rig.gain <= rig.h_dataset);

    IndicatorPartition lonely;
    lonely.subsets["ONLY"] = estimates;
    CHECK_THROWS_AS(information_gain(lonely), std::invalid_argument);
}

TEST_CASE("overclock classification") {
    CHECK(classify_overclock({1350}, 1350) == OverclockStatus::stock);
    CHECK(classify_overclock({1350}, 1200) == OverclockStatus::stock);
    CHECK(classify_overclock({1350}, 1500) == OverclockStatus::overclocked);
    CHECK(classify_overclock({1375, 1500}, 1450) == OverclockStatus::indeterminate);
    CHECK(classify_overclock({1375, 1500}, 1375) == OverclockStatus::stock);
    CHECK(classify_overclock({1375, 1500}, 1501) == OverclockStatus::overclocked);

    auto table = default_stock_table();
    CHECK(classify_overclock(table, "GeForce 8800 GTX", 1500) ==
          OverclockStatus::overclocked);
    CHECK(classify_overclock(table, "No Such Device", 1500) ==
          OverclockStatus::indeterminate);

    CardSpec card;
    card.stock_clocks_mhz = {1350};
    card.reported_clock_mhz = 1350;
    CHECK(classify_overclock(card) == OverclockStatus::stock);
}

TEST_CASE("day and night windows") {
    const std::int64_t day0 = 1736121600;  // 00:00 UTC
    auto at = [&](int h, int m) { return day0 + h * 3600 + m * 60; };

    CHECK(classify_daynight(at(8, 10), at(8, 12), 0) == DayNight::day);
    CHECK(classify_daynight(at(17, 59), at(18, 1), 0) == DayNight::excluded);
    CHECK(classify_daynight(at(23, 0), at(25, 0), 0) == DayNight::night);
    CHECK(classify_daynight(at(5, 59), at(6, 1), 0) == DayNight::excluded);
    CHECK(classify_daynight(at(6, 0), at(6, 1), 0) == DayNight::day);
    CHECK(classify_daynight(at(18, 0), at(18, 30), 0) == DayNight::night);

    // twelve hours or longer always spans a boundary
    CHECK(classify_daynight(at(6, 30), at(18, 30), 0) == DayNight::excluded);
    CHECK(classify_daynight(at(0, 0), at(13, 0), 0) == DayNight::excluded);

    // offsets shift the local window
    CHECK(classify_daynight(at(12, 0), at(12, 2), -11 * 60) == DayNight::night);
    CHECK(classify_daynight(at(12, 0), at(12, 2), -5 * 60) == DayNight::day);
    CHECK(classify_daynight(at(22, 0), at(22, 2), 12 * 60) == DayNight::day);
}

TEST_CASE("test mutual information matrix") {
    SECTION("identical tests explain each other completely") {
        RandomStream rs(3, 0x6d6174u);
        std::vector<IterationRecord> recs;
        for (int i = 0; i < 600; ++i) {
            auto r = make_record("card-000001", false);
            std::uint64_t c = rs.next_range(4);  // 0..3, zero-heavy enough
            r.errors[index_of(TestCode::l)] = c;
            r.errors[index_of(TestCode::l4)] = c;
            r.errors[index_of(TestCode::rb)] = rs.next_range(3);
            r.failed = false;
            for (auto e : r.errors) r.failed = r.failed || e > 0;
            recs.push_back(r);
        }
        auto m = test_mi_matrix(group_records(recs));
        const std::size_t l = index_of(TestCode::l), l4 = index_of(TestCode::l4);
        REQUIRE(m.column_defined[l]);
        REQUIRE(m.column_defined[l4]);
        CHECK(m.ratio[l4][l] == Catch::Approx(1.0).margin(1e-9));
        CHECK(m.ratio[l][l4] == Catch::Approx(1.0).margin(1e-9));
        CHECK(m.ratio[l][l] == Catch::Approx(1.0).margin(1e-9));
        // the independent test explains little of the logic column
        CHECK(m.ratio[index_of(TestCode::rb)][l] < 0.05);
        CHECK_FALSE(m.column_defined[index_of(TestCode::mi10)]);
        CHECK(std::isnan(m.ratio[l][index_of(TestCode::mi10)]));
    }

    SECTION("all-clean dataset leaves every column undefined") {
        std::vector<IterationRecord> recs;
        for (int i = 0; i < 50; ++i) recs.push_back(make_record("card-000001", false));
        auto m = test_mi_matrix(group_records(recs));
        for (std::size_t t = 0; t < kTestCodeCount; ++t) {
            CHECK_FALSE(m.column_defined[t]);
            CHECK(m.test_entropy[t] == 0.0);
            CHECK(std::isnan(m.ratio[t][t]));
        }
    }

    SECTION("a shared logic fault factor shows up as block structure") {
        RandomStream rs(7, 0x626c6bu);
        std::vector<IterationRecord> recs;
        for (int i = 0; i < 2500; ++i) {
            auto r = make_record("card-000001", false);
            if (rs.next_range(5) == 0) {  // shared ALU event drives all logic tests
                for (TestCode c : {TestCode::l, TestCode::l4, TestCode::ls, TestCode::ls4})
                    r.errors[index_of(c)] = 1 + rs.next_range(3);
            }
            for (TestCode c : {TestCode::w1m, TestCode::w10, TestCode::rb})
                if (rs.next_range(5) == 0) r.errors[index_of(c)] = 1 + rs.next_range(3);
            for (auto e : r.errors) r.failed = r.failed || e > 0;
            recs.push_back(r);
        }
        auto m = test_mi_matrix(group_records(recs));
        const std::array logic = {TestCode::l, TestCode::l4, TestCode::ls, TestCode::ls4};
        const std::array memory = {TestCode::w1m, TestCode::w10, TestCode::rb};
        double intra = 0.0, cross = 0.0;
        int n_intra = 0, n_cross = 0;
        for (TestCode a : logic)
            for (TestCode b : logic)
                if (a != b) {
                    intra += m.ratio[index_of(a)][index_of(b)];
                    ++n_intra;
                }
        for (TestCode a : memory)
            for (TestCode b : logic) {
                cross += m.ratio[index_of(a)][index_of(b)];
                ++n_cross;
            }
        CHECK(intra / n_intra > 10.0 * (cross / n_cross + 1e-6));
    }
}

TEST_CASE("count binning convention") {
    CHECK(count_bin(0, 100) == 0);
    for (std::uint64_t c = 1; c <= 9; ++c) CHECK(count_bin(c, 9) == c);
    CHECK(count_bin(1, 1) == 9);       // the max always tops out
    CHECK(count_bin(1, 1000) == 1);    // small positives stay just above zero
    CHECK(count_bin(1000, 1000) == 9);
    CHECK(count_bin(500, 1000) == 5);  // 4.5 rounds into the fifth bin
}

TEST_CASE("hypothesis reports on a planted fleet") {
    FleetParams fp;
    fp.n_cards = 400;
    fp.zero_error_fraction = 0.2;
    fp.mode_pfail = 2e-2;
    fp.log_sigma = 0.5;
    fp.arch_mix = {{Arch::g80, 0.5}, {Arch::gt200, 0.5}};
    fp.arch_pfail_scale = {{Arch::gt200, 0.1}};
    fp.seed = 19;
    CampaignParams cp;
    cp.iterations_per_card = 1500;
    cp.seed = 23;
    auto d = group_records(run_campaign(sample_fleet(fp), cp));

    auto arch = hypothesis_report(d, Hypothesis::architecture);
    CHECK(arch.indicator == "architecture");
    CHECK(arch.subset_sizes.at("G80") + arch.subset_sizes.at("GT200") == 400);
    CHECK(arch.subset_sizes.at("OTHER") == 0);
    CHECK(arch.gain > 0.5);
    CHECK(arch.gain <= arch.h_dataset);
    CHECK(arch.perfect_gain >= 0.0);
    CHECK(arch.perfect_gain <= arch.h_dataset);

    // failures were drawn independently of time of day; the residual gain is
    // finite-sample bias, roughly (bins-1)(labels-1)/(2 N ln 2) bits
    auto dn = hypothesis_report(d, Hypothesis::daynight);
    CHECK(dn.gain < 0.15);
    CHECK(dn.gain < arch.gain / 4.0);
    CHECK(dn.subset_sizes.at("DAY") > 0);
    CHECK(dn.subset_sizes.at("NIGHT") > 0);

    // nobody overclocks in this fleet, so the indicator carries no signal
    auto oc = hypothesis_report(d, Hypothesis::overclock);
    CHECK(oc.subset_sizes.at("OVERCLOCKED") == 0);
    CHECK(oc.gain == 0.0);

    CHECK(format_bits(arch.h_dataset).find('.') != std::string::npos);
    CHECK(format_bits(0.91829583).size() == 6);
}
