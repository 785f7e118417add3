#include <gtest/gtest.h>

#include <map>
#include <sstream>

#include "abms/simulator.hpp"
#include "test_support.hpp"

using namespace abms;
using abms::testing::read_text;
using abms::testing::TempDir;

namespace fs = std::filesystem;

namespace {

Scenario evaluation() { return load_scenario(fs::path(ABMS_DATA_DIR) / "evaluation.scenario"); }

} // namespace

TEST(ParseScenario, Directives) {
    const auto sc = parse_scenario("# comment\nseed 7\ntime_base 2017-02-20 11:20:38\nbw_min 256\n"
                                   "educational_hosts a.edu b.edu\nother_hosts c.com\n\n10.0.0.1 3 4\n10.0.0.2 0 1 300\n");
    EXPECT_EQ(sc.seed, 7u);
    EXPECT_EQ(sc.bw_min, 256u);
    EXPECT_EQ(format_date(date_of(sc.time_base)), "2017-02-20");
    EXPECT_EQ(sc.educational_hosts, (std::vector<std::string>{"a.edu", "b.edu"}));
    EXPECT_EQ(sc.other_hosts, (std::vector<std::string>{"c.com"}));
    ASSERT_EQ(sc.users.size(), 2u);
    EXPECT_EQ(sc.users[0].total_views(), 7u);
    EXPECT_FALSE(sc.users[0].initial_bw);
    EXPECT_EQ(sc.users[1].initial_bw, 300u);
}

TEST(ParseScenario, RejectsBadInput) {
    for (const char* bad : {"10.0.0.1 3\n", "10.0.0.1 x 3\n", "10.0.0.1 1 1\n10.0.0.1 2 2\n", "speed 3\n",
                            "bw_min 0\n", "time_base yesterday\n", "10.0.0.1 1 1 0\n"})
        EXPECT_THROW(parse_scenario(bad), ParseError) << bad;
}

TEST(ParseScenario, EvaluationFixture) {
    const auto sc = evaluation();
    ASSERT_EQ(sc.users.size(), 15u);
    EXPECT_EQ(sc.users.front().ip.to_string(), "172.16.5.20");
    EXPECT_EQ(sc.users.back().ip.to_string(), "172.16.5.34");
    EXPECT_EQ(sc.users[6].initial_bw, 811u);
}

TEST(GenerateLog, DeterministicForSeed) {
    auto sc = evaluation();
    EXPECT_EQ(generate_log(sc).text(), generate_log(sc).text());
    sc.seed += 1;
    EXPECT_NE(generate_log(sc).text(), generate_log(evaluation()).text());
}

TEST(GenerateLog, ScriptedCountsAndNoise) {
    Scenario sc;
    sc.users = {{*Ipv4::parse("172.16.5.20"), 8, 2, std::nullopt}};
    const auto log = generate_log(sc);
    ASSERT_EQ(log.lines.size(), 11u);
    std::size_t countable = 0, educational = 0;
    for (const auto& l : log.lines) {
        const auto r = parse_log_line(l.text);
        ASSERT_TRUE(r) << l.text;
        EXPECT_EQ(is_countable(*r), l.countable) << l.text;
        countable += l.countable;
        educational += l.educational;
    }
    EXPECT_EQ(countable, 10u);
    EXPECT_EQ(educational, 8u);
}

TEST(GenerateLog, TimestampsIncrease) {
    const auto log = generate_log(evaluation());
    std::int64_t prev = 0;
    for (const auto& l : log.lines) {
        const auto r = parse_log_line(l.text);
        ASSERT_TRUE(r);
        EXPECT_GT(r->timestamp_ms, prev);
        prev = r->timestamp_ms;
    }
}

TEST(GenerateLog, PerUserCountsMatchScript) {
    const auto sc = evaluation();
    std::map<Ipv4, std::pair<std::uint64_t, std::uint64_t>> seen;
    for (const auto& l : generate_log(sc).lines) {
        if (!l.countable) continue;
        seen[l.client_ip].first += l.educational;
        seen[l.client_ip].second += 1;
    }
    for (const auto& u : sc.users) {
        EXPECT_EQ(seen[u.ip].first, u.educational_views) << u.ip;
        EXPECT_EQ(seen[u.ip].second, u.total_views()) << u.ip;
    }
}

TEST(GenerateLog, EmptyHostListIsInvalid) {
    Scenario sc;
    sc.users = {{*Ipv4::parse("10.0.0.1"), 1, 0, std::nullopt}};
    sc.educational_hosts.clear();
    EXPECT_THROW(generate_log(sc), InvalidScenario);
    sc.users[0] = {*Ipv4::parse("10.0.0.1"), 0, 1, std::nullopt};
    EXPECT_NO_THROW(generate_log(sc));
}

TEST(RunScenario, EvaluationRunReproducesEveryRow) {
    TempDir dir;
    SimulationOptions opts;
    opts.workdir = dir.path();
    std::ostringstream diag;
    const auto report = run_scenario(evaluation(), opts, diag);
    EXPECT_EQ(report.matched(), 15u) << format_report(report);
    EXPECT_EQ(report.events.size(), 15u);
    EXPECT_NE(format_report(report).find("matched 15/15"), std::string::npos);
    // the generated log stays in place for inspection
    EXPECT_FALSE(read_text(dir / "access.log").empty());
}

TEST(RunScenario, InitialAboveFloorDecreases) {
    TempDir dir;
    SimulationOptions opts;
    opts.workdir = dir.path();
    Scenario sc;
    sc.users = {{*Ipv4::parse("172.16.5.25"), 0, 5, 768}};
    std::ostringstream diag;
    const auto report = run_scenario(sc, opts, diag);
    ASSERT_EQ(report.events.size(), 1u);
    EXPECT_EQ(report.events[0].old_bw, 768u);
    EXPECT_EQ(report.events[0].new_bw, 512u);
    EXPECT_EQ(report.events[0].direction, Direction::decreased);
    EXPECT_TRUE(report.all_matched());
}

TEST(RunScenario, OverlappingHostListsAreRejected) {
    TempDir dir;
    SimulationOptions opts;
    opts.workdir = dir.path();
    Scenario sc;
    sc.users = {{*Ipv4::parse("10.0.0.1"), 1, 1, std::nullopt}};
    sc.other_hosts = {"www.cornell.edu"};
    std::ostringstream diag;
    EXPECT_THROW(run_scenario(sc, opts, diag), InvalidScenario);
}

TEST(RunScenario, ExternalCategoryList) {
    TempDir dir;
    SimulationOptions opts;
    opts.workdir = dir.path();
    opts.categories = fs::path(ABMS_DATA_DIR) / "shallalist-educational.txt";
    std::ostringstream diag;
    EXPECT_TRUE(run_scenario(evaluation(), opts, diag).all_matched());
}
