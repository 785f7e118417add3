#include <gtest/gtest.h>

#include <regex>
#include <sstream>

#include "abms/orchestrator.hpp"
#include "test_support.hpp"

using namespace abms;
using namespace std::chrono;
using abms::testing::append_text;
using abms::testing::log_line;
using abms::testing::read_text;
using abms::testing::TempDir;
using abms::testing::write_text;

namespace fs = std::filesystem;

namespace {

const std::regex kEventGrammar(
    R"(^\[\d{2}/\d{2}/\d{4} \d{2}:\d{2}:\d{2}\] \d{1,3}(\.\d{1,3}){3} (increased|decreased) from \d+Kbps to \d+Kbps\.$)");

LocalTime at(int y, unsigned mo, unsigned d, int h, int mi, int s) {
    return local_days{year{y} / mo / d} + hours{h} + minutes{mi} + seconds{s};
}

Ipv4 ip(const char* s) { return *Ipv4::parse(s); }

std::string views(const std::string& who, int educational, int other) {
    std::string out;
    for (int i = 0; i < educational; ++i) out += log_line(who, "http://www.cornell.edu/p" + std::to_string(i)) + "\n";
    for (int i = 0; i < other; ++i) out += log_line(who, "http://facebook.com/p" + std::to_string(i)) + "\n";
    return out;
}

class EngineTest : public ::testing::Test {
protected:
    void SetUp() override {
        write_text(dir / "edu.txt", "cornell.edu\nedinboro.edu\n");
        write_text(dir / "config.xml", render_allowedip_config({
                                           {ip("172.16.5.20"), 32, "User 1", 512, 512},
                                           {ip("172.16.5.21"), 32, "User 2", 512, 512},
                                           {ip("172.16.5.25"), 32, "User 3", 768, 768},
                                       }));
        write_text(dir / "access.log", "");
        rc.log_path = dir / "access.log";
        rc.category_path = dir / "edu.txt";
        rc.config_path = dir / "config.xml";
        rc.bw_min = 512;
    }

    Engine make() { return Engine(rc, clock, diag); }

    Kbps on_disk(const char* who) { return *load_config(rc.config_path).current_bandwidth(ip(who)); }

    std::size_t backups() {
        std::size_t n = 0;
        for (const auto& e : fs::directory_iterator(dir.path()))
            n += e.path().filename().string().starts_with("config.xml.bak.") ? 1 : 0;
        return n;
    }

    TempDir dir;
    RuntimeConfig rc;
    FixedClock clock{at(2017, 2, 20, 11, 25, 5)};
    std::ostringstream diag;
};

} // namespace

TEST(FormatEvent, MatchesConsoleLines) {
    AllocationEvent a{at(2017, 2, 20, 11, 25, 5), ip("172.16.5.20"), 512, 922, Direction::increased};
    EXPECT_EQ(format_event(a), "[02/20/2017 11:25:05] 172.16.5.20 increased from 512Kbps to 922Kbps.");
    AllocationEvent b{at(2017, 2, 20, 11, 27, 1), ip("172.16.5.25"), 768, 512, Direction::decreased};
    EXPECT_EQ(format_event(b), "[02/20/2017 11:27:01] 172.16.5.25 decreased from 768Kbps to 512Kbps.");
}

TEST(FormatEvent, TwelveHourClock) {
    AllocationEvent ev{at(2017, 12, 1, 0, 5, 9), ip("10.0.0.1"), 512, 600, Direction::increased};
    EXPECT_EQ(format_event(ev), "[12/01/2017 12:05:09] 10.0.0.1 increased from 512Kbps to 600Kbps.");
    ev.timestamp = at(2017, 12, 1, 13, 0, 0);
    EXPECT_EQ(format_event(ev), "[12/01/2017 01:00:00] 10.0.0.1 increased from 512Kbps to 600Kbps.");
    EXPECT_TRUE(std::regex_match(format_event(ev), kEventGrammar));
}

TEST(FormatEvent, RefusesInconsistentEvents) {
    AllocationEvent same{at(2017, 2, 20, 0, 0, 0), ip("10.0.0.1"), 512, 512, Direction::increased};
    EXPECT_THROW(format_event(same), std::invalid_argument);
    AllocationEvent wrong{at(2017, 2, 20, 0, 0, 0), ip("10.0.0.1"), 512, 600, Direction::decreased};
    EXPECT_THROW(format_event(wrong), std::invalid_argument);
}

TEST(RuntimeConfig, BandwidthSourceMustBeUnambiguous) {
    RuntimeConfig rc;
    EXPECT_THROW(rc.validate(), std::invalid_argument);
    rc.tbi = 51200;
    EXPECT_THROW(rc.validate(), std::invalid_argument);
    rc.enu = 100;
    EXPECT_EQ(rc.policy().bw_min, 512u);
    rc.bw_min = 512;
    EXPECT_THROW(rc.validate(), std::invalid_argument);
    rc.tbi.reset();
    rc.enu.reset();
    rc.poll_interval_seconds = 0;
    EXPECT_THROW(rc.validate(), std::invalid_argument);
}

TEST_F(EngineTest, EducationalBrowsingRaisesAllocation) {
    auto engine = make();
    EXPECT_TRUE(engine.start().empty());
    append_text(rc.log_path, views("172.16.5.20", 8, 2));

    const auto events = engine.tick();
    ASSERT_EQ(events.size(), 1u);
    EXPECT_EQ(format_event(events[0]), "[02/20/2017 11:25:05] 172.16.5.20 increased from 512Kbps to 922Kbps.");
    EXPECT_FALSE(events[0].simulated);
    EXPECT_EQ(on_disk("172.16.5.20"), 922u);
    EXPECT_EQ(load_config(rc.config_path).find(ip("172.16.5.20"))->bw_up, 922u);
    EXPECT_EQ(backups(), 1u);
    EXPECT_EQ(fs::file_size(rc.log_path), 0u);
    EXPECT_TRUE(engine.last_cycle().truncated);

    EXPECT_TRUE(engine.tick().empty()); // nothing new

    append_text(rc.log_path, views("172.16.5.20", 0, 10));
    clock.advance(seconds(60));
    const auto later = engine.tick();
    ASSERT_EQ(later.size(), 1u);
    EXPECT_EQ(format_event(later[0]), "[02/20/2017 11:26:05] 172.16.5.20 decreased from 922Kbps to 717Kbps.");
    EXPECT_EQ(on_disk("172.16.5.20"), 717u);
    EXPECT_EQ(engine.stats().find(ip("172.16.5.20"))->tsa, 20u);
}

TEST_F(EngineTest, NoisyLinesAreIgnored) {
    auto engine = make();
    engine.start();
    append_text(rc.log_path, log_line("172.16.5.21", "http://cornell.edu/logo.gif", "TCP_MISS/200", "GET", "image/gif") +
                                 "\n" + log_line("172.16.5.21", "http://cornell.edu/x", "TCP_MISS/200", "POST") + "\n" +
                                 log_line("172.16.5.21", "http://cornell.edu/y", "TCP_MISS/404") + "\nnot a log line\n");
    EXPECT_TRUE(engine.tick().empty());
    EXPECT_EQ(engine.stats().find(ip("172.16.5.21")), nullptr);
    EXPECT_EQ(engine.last_cycle().malformed, 1u);
    EXPECT_EQ(engine.last_cycle().records, 3u);
}

TEST_F(EngineTest, DryRunWritesNothing) {
    rc.dry_run = true;
    auto engine = make();
    engine.start();
    const std::string before = read_text(rc.config_path);
    append_text(rc.log_path, views("172.16.5.20", 8, 2));
    const auto events = engine.tick();
    ASSERT_EQ(events.size(), 1u);
    EXPECT_TRUE(events[0].simulated);
    EXPECT_EQ(engine.document().current_bandwidth(ip("172.16.5.20")), 922u);
    EXPECT_EQ(read_text(rc.config_path), before);
    EXPECT_EQ(backups(), 0u);
    EXPECT_GT(fs::file_size(rc.log_path), 0u);
}

TEST_F(EngineTest, UnknownClientWarnsOncePerDay) {
    auto engine = make();
    engine.start();
    append_text(rc.log_path, views("10.9.9.9", 1, 0));
    EXPECT_TRUE(engine.tick().empty());
    append_text(rc.log_path, views("10.9.9.9", 1, 0));
    engine.tick();
    const std::string out = diag.str();
    EXPECT_NE(out.find("10.9.9.9 has no allowedip entry"), std::string::npos);
    EXPECT_EQ(out.find("10.9.9.9", out.find("10.9.9.9") + 1), std::string::npos);
}

TEST_F(EngineTest, FailedWriteKeepsCountersAndRetries) {
    auto engine = make();
    engine.start();
    const std::string config = read_text(rc.config_path);
    append_text(rc.log_path, views("172.16.5.20", 8, 2));
    fs::remove(rc.config_path);

    EXPECT_TRUE(engine.tick().empty());
    EXPECT_FALSE(engine.last_cycle().committed);
    EXPECT_EQ(engine.stats().find(ip("172.16.5.20"))->tsa, 10u);
    EXPECT_EQ(engine.document().current_bandwidth(ip("172.16.5.20")), 512u);
    EXPECT_GT(fs::file_size(rc.log_path), 0u); // not truncated

    write_text(rc.config_path, config);
    const auto events = engine.tick();
    ASSERT_EQ(events.size(), 1u);
    EXPECT_EQ(events[0].new_bw, 922u);
    EXPECT_EQ(engine.stats().find(ip("172.16.5.20"))->tsa, 10u); // not double counted
    EXPECT_EQ(on_disk("172.16.5.20"), 922u);
}

TEST_F(EngineTest, MissingLogSkipsCycle) {
    auto engine = make();
    engine.start();
    fs::remove(rc.log_path);
    EXPECT_TRUE(engine.tick().empty());
    EXPECT_NE(diag.str().find("cannot stat"), std::string::npos);
}

TEST_F(EngineTest, NoTruncateKeepsLogAndReadsIncrementally) {
    rc.truncate_log = false;
    auto engine = make();
    engine.start();
    append_text(rc.log_path, views("172.16.5.20", 1, 1));
    engine.tick();
    append_text(rc.log_path, views("172.16.5.20", 1, 1));
    engine.tick();
    EXPECT_EQ(engine.stats().find(ip("172.16.5.20"))->tsa, 4u);
    EXPECT_EQ(engine.log_offset(), fs::file_size(rc.log_path));
}

TEST_F(EngineTest, DailyResetRestoresFloor) {
    auto engine = make();
    engine.start();
    append_text(rc.log_path, views("172.16.5.20", 8, 2) + views("172.16.5.21", 1, 1));
    engine.tick();
    ASSERT_EQ(on_disk("172.16.5.21"), 768u);

    clock.set(at(2017, 2, 20, 23, 59, 59));
    EXPECT_TRUE(engine.maybe_daily_reset().empty());

    clock.set(at(2017, 2, 21, 0, 0, 3));
    const auto events = engine.maybe_daily_reset();
    ASSERT_EQ(events.size(), 3u); // .20 922, .21 768, .25 768 -- all above the floor
    for (const auto& ev : events) {
        EXPECT_EQ(ev.direction, Direction::decreased);
        EXPECT_EQ(ev.new_bw, 512u);
    }
    EXPECT_TRUE(engine.stats().empty());
    EXPECT_EQ(engine.stats().day(), (Date{year{2017}, month{2}, day{21}}));
    for (const char* who : {"172.16.5.20", "172.16.5.21", "172.16.5.25"}) EXPECT_EQ(on_disk(who), 512u);

    clock.advance(hours(5));
    EXPECT_TRUE(engine.maybe_daily_reset().empty());
}

TEST_F(EngineTest, ResetTimeIsConfigurable) {
    rc.reset_time = ClockTime{6, 30};
    clock.set(at(2017, 2, 21, 3, 0, 0));
    auto engine = make();
    engine.start();
    EXPECT_EQ(engine.stats().day(), (Date{year{2017}, month{2}, day{20}}));
    clock.set(at(2017, 2, 21, 6, 29, 59));
    EXPECT_TRUE(engine.maybe_daily_reset().empty());
    clock.set(at(2017, 2, 21, 6, 30, 0));
    EXPECT_EQ(engine.maybe_daily_reset().size(), 1u); // only .25 sits above the floor
}

TEST_F(EngineTest, StartupSanitizesOutOfRangeEntries) {
    write_text(rc.config_path, render_allowedip_config({
                                   {ip("10.0.0.1"), 32, "high", 2000, 2000},
                                   {ip("10.0.0.2"), 32, "low", 100, 100},
                                   {ip("10.0.0.3"), 32, "ok", 1024, 1024},
                               }));
    auto engine = make();
    const auto events = engine.start();
    ASSERT_EQ(events.size(), 2u);
    EXPECT_EQ(format_event(events[0]), "[02/20/2017 11:25:05] 10.0.0.1 decreased from 2000Kbps to 512Kbps.");
    EXPECT_EQ(format_event(events[1]), "[02/20/2017 11:25:05] 10.0.0.2 increased from 100Kbps to 512Kbps.");
    EXPECT_EQ(on_disk("10.0.0.3"), 1024u);
    EXPECT_EQ(on_disk("10.0.0.1"), 512u);
}

TEST_F(EngineTest, StartupFailures) {
    rc.category_path = dir / "missing.txt";
    EXPECT_THROW(make().start(), IoError);
    rc.category_path = dir / "edu.txt";
    write_text(rc.config_path, "<allowedip><ip>1.2.3.4</ip></allowedip>");
    EXPECT_THROW(make().start(), ParseError);
}

TEST_F(EngineTest, SnapshotSurvivesRestart) {
    rc.snapshot_path = dir / "stats.snap";
    {
        auto engine = make();
        engine.start();
        append_text(rc.log_path, views("172.16.5.20", 1, 4));
        engine.tick();
    }
    EXPECT_EQ(read_text(dir / "stats.snap"), "2017-02-20\n172.16.5.20 1 5\n");
    ASSERT_EQ(on_disk("172.16.5.20"), 614u);

    auto engine = make();
    engine.start();
    append_text(rc.log_path, views("172.16.5.20", 7, 0));
    const auto events = engine.tick();
    EXPECT_EQ(*engine.stats().find(ip("172.16.5.20")), (UserStats{ip("172.16.5.20"), 8, 12}));
    ASSERT_EQ(events.size(), 1u);
    EXPECT_EQ(events[0].new_bw, 853u);

    // a snapshot from an earlier day is discarded
    clock.set(at(2017, 2, 22, 9, 0, 0));
    auto next_day = make();
    next_day.start();
    EXPECT_TRUE(next_day.stats().empty());
}

TEST_F(EngineTest, MatchAndStatusModes) {
    rc.status_mode = StatusMode::tcp_miss_only;
    rc.match_mode = MatchMode::substring;
    auto engine = make();
    engine.start();
    append_text(rc.log_path, log_line("172.16.5.20", "http://ornell.edu/") + "\n" +
                                 log_line("172.16.5.20", "http://cornell.edu/", "TCP_HIT/200") + "\n" +
                                 log_line("172.16.5.20", "http://fakecornell.edu/") + "\n");
    engine.tick();
    const auto* s = engine.stats().find(ip("172.16.5.20"));
    ASSERT_NE(s, nullptr);
    EXPECT_EQ(s->tsa, 2u); // the TCP_HIT line is not counted
    EXPECT_EQ(s->nes, 1u); // "ornell.edu" occurs in the list text
}

TEST_F(EngineTest, EveryEntryStaysWithinBounds) {
    auto engine = make();
    engine.start();
    std::mt19937 rng(1);
    for (int round = 0; round < 20; ++round) {
        std::string batch;
        for (int i = 0; i < 30; ++i) {
            const std::string who = "172.16.5." + std::to_string(rng() % 2 ? 20 : 21);
            batch += log_line(who, rng() % 2 ? "http://cornell.edu/" : "http://x.com/") + "\n";
        }
        append_text(rc.log_path, batch);
        for (const auto& ev : engine.tick()) EXPECT_TRUE(std::regex_match(format_event(ev), kEventGrammar));
        for (const auto& e : load_config(rc.config_path).entries()) {
            EXPECT_GE(e.bw_down, 512u);
            EXPECT_LE(e.bw_down, 1024u);
            EXPECT_EQ(e.bw_up, e.bw_down);
        }
    }
}
