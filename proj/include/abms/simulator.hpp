#pragma once

// Synthetic squid access logs for scripted browsing scenarios, and an
// end-to-end runner that pushes one through the full pipeline.
//
// Scenario files are line oriented:
//
//   # comment
//   seed 20170220
//   time_base 2017-02-20 11:20:38
//   bw_min 512
//   educational_hosts cornell.edu edinboro.edu
//   other_hosts example.com news.example.org
//   172.16.5.20 8 2 512        <- ip, educational views, other views[, initial Kbps]

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "abms/allocation.hpp"
#include "abms/clock.hpp"
#include "abms/config_store.hpp"
#include "abms/domain_index.hpp"
#include "abms/errors.hpp"
#include "abms/log_ingest.hpp"
#include "abms/orchestrator.hpp"
#include "abms/text.hpp"

namespace abms {

class InvalidScenario : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct ScenarioUser {
    Ipv4 ip;
    std::uint64_t educational_views = 0;
    std::uint64_t other_views = 0;
    std::optional<Kbps> initial_bw; ///< defaults to the scenario's bw_min

    std::uint64_t total_views() const { return educational_views + other_views; }
};

struct Scenario {
    std::vector<ScenarioUser> users;
    std::uint64_t seed = 1;
    LocalTime time_base = std::chrono::local_days{std::chrono::year{2017} / 2 / 20};
    Kbps bw_min = 512;
    std::vector<std::string> educational_hosts = {"cornell.edu", "edinboro.edu"};
    std::vector<std::string> other_hosts = {"example.com", "news.example.org"};
};

inline Scenario parse_scenario(std::string_view source) {
    Scenario sc;
    std::istringstream in{std::string(source)};
    std::string raw;
    int line_no = 0;
    std::set<Ipv4> seen;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string_view line = text::trim(raw);
        if (line.empty() || line.front() == '#') continue;
        const auto where = "scenario line " + std::to_string(line_no);
        const auto fields = text::split_ws(line);
        const std::string_view key = fields[0];
        const std::string_view rest = text::trim(line.substr(key.size()));

        if (key == "seed") {
            auto v = detail::parse_int<std::uint64_t>(rest);
            if (!v) throw ParseError(where + ": bad seed");
            sc.seed = *v;
        } else if (key == "time_base") {
            auto t = parse_local_time(rest);
            if (!t) throw ParseError(where + ": time_base must be 'YYYY-MM-DD hh:mm:ss'");
            sc.time_base = *t;
        } else if (key == "bw_min") {
            auto v = detail::parse_int<Kbps>(rest);
            if (!v || *v == 0) throw ParseError(where + ": bad bw_min");
            sc.bw_min = *v;
        } else if (key == "educational_hosts" || key == "other_hosts") {
            auto& hosts = key == "educational_hosts" ? sc.educational_hosts : sc.other_hosts;
            hosts.assign(fields.begin() + 1, fields.end());
        } else if (auto ip = Ipv4::parse(key)) {
            if (fields.size() != 3 && fields.size() != 4) throw ParseError(where + ": expected 'ip educ other [initial]'");
            auto educ = detail::parse_int<std::uint64_t>(fields[1]);
            auto other = detail::parse_int<std::uint64_t>(fields[2]);
            if (!educ || !other) throw ParseError(where + ": bad view count");
            ScenarioUser u{*ip, *educ, *other, std::nullopt};
            if (fields.size() == 4) {
                auto init = detail::parse_int<Kbps>(fields[3]);
                if (!init || *init == 0) throw ParseError(where + ": bad initial bandwidth");
                u.initial_bw = *init;
            }
            if (!seen.insert(*ip).second) throw ParseError(where + ": duplicate ip " + ip->to_string());
            sc.users.push_back(u);
        } else {
            throw ParseError(where + ": unknown directive '" + std::string(key) + "'");
        }
    }
    return sc;
}

inline Scenario load_scenario(const std::filesystem::path& path) { return parse_scenario(read_file(path)); }

/// One emitted log line and whether the cleaning stage should keep it.
struct GeneratedLine {
    std::string text;
    Ipv4 client_ip;
    bool countable = false;
    bool educational = false;
};

struct GeneratedLog {
    std::vector<GeneratedLine> lines;

    std::string text() const {
        std::string out;
        for (const auto& l : lines) out += l.text + '\n';
        return out;
    }
};

inline constexpr std::size_t kNoiseEvery = 10;

/// One countable line per scripted view, interleaved across users in a
/// seed-determined order with strictly increasing timestamps. After every
/// tenth countable line a noise line (image fetch, POST or 404) follows.
inline GeneratedLog generate_log(const Scenario& sc) {
    for (const auto& u : sc.users) {
        if (u.educational_views > 0 && sc.educational_hosts.empty())
            throw InvalidScenario(u.ip.to_string() + " has educational views but no educational hosts are listed");
        if (u.other_views > 0 && sc.other_hosts.empty())
            throw InvalidScenario(u.ip.to_string() + " has other views but no other hosts are listed");
    }

    std::mt19937_64 rng(sc.seed);
    const auto pick = [&rng](std::size_t n) { return static_cast<std::size_t>(rng() % n); };

    struct View {
        std::size_t user;
        bool educational;
    };
    std::vector<View> views;
    for (std::size_t i = 0; i < sc.users.size(); ++i) {
        views.insert(views.end(), sc.users[i].educational_views, View{i, true});
        views.insert(views.end(), sc.users[i].other_views, View{i, false});
    }
    for (std::size_t i = views.size(); i > 1; --i) std::swap(views[i - 1], views[pick(i)]);

    std::int64_t clock_ms = std::chrono::duration_cast<std::chrono::milliseconds>(sc.time_base.time_since_epoch()).count();
    const auto emit = [&](Ipv4 ip, std::string_view result, std::string_view method, const std::string& url,
                          std::string_view type, bool countable, bool educational) {
        clock_ms += 250 + static_cast<std::int64_t>(pick(1500));
        char line[512];
        std::snprintf(line, sizeof line, "%lld.%03lld %6u %s %.*s %u %.*s %s - HIER_DIRECT/93.184.%u.%u %.*s",
                      static_cast<long long>(clock_ms / 1000), static_cast<long long>(clock_ms % 1000),
                      static_cast<unsigned>(20 + pick(900)), ip.to_string().c_str(), static_cast<int>(result.size()),
                      result.data(), static_cast<unsigned>(500 + pick(60000)), static_cast<int>(method.size()),
                      method.data(), url.c_str(), static_cast<unsigned>(pick(256)), static_cast<unsigned>(1 + pick(254)),
                      static_cast<int>(type.size()), type.data());
        return GeneratedLine{line, ip, countable, educational};
    };
    static constexpr const char* kPages[] = {"/", "/index.html", "/courses/", "/research/papers.php",
                                             "/news/article?id=", "/library/catalog.aspx?q="};
    const auto page_url = [&](const std::string& host) {
        std::string url = "http://" + host + kPages[pick(std::size(kPages))];
        if (url.back() == '=') url += std::to_string(pick(10000));
        return url;
    };

    GeneratedLog log;
    std::size_t countable = 0;
    for (const View& v : views) {
        const ScenarioUser& u = sc.users[v.user];
        const auto& hosts = v.educational ? sc.educational_hosts : sc.other_hosts;
        log.lines.push_back(emit(u.ip, "TCP_MISS/200", "GET", page_url(hosts[pick(hosts.size())]), "text/html", true,
                                 v.educational));
        if (++countable % kNoiseEvery != 0) continue;

        const auto& noise_hosts = !sc.educational_hosts.empty() ? sc.educational_hosts : sc.other_hosts;
        const std::string host = noise_hosts[pick(noise_hosts.size())];
        switch (pick(3)) {
        case 0:
            log.lines.push_back(emit(u.ip, "TCP_MISS/200", "GET", "http://" + host + "/images/banner.jpg",
                                     "image/jpeg", false, false));
            break;
        case 1:
            log.lines.push_back(emit(u.ip, "TCP_MISS/200", "POST", "http://" + host + "/login.php", "text/html", false,
                                     false));
            break;
        default:
            log.lines.push_back(emit(u.ip, "TCP_MISS/404", "GET", "http://" + host + "/missing.html", "text/html", false,
                                     false));
            break;
        }
    }
    return log;
}

struct ScenarioRow {
    Ipv4 ip;
    std::uint64_t scripted_nes = 0;
    std::uint64_t scripted_tsa = 0;
    std::uint64_t nes = 0; ///< as counted by the pipeline
    std::uint64_t tsa = 0;
    Kbps initial = 0;
    Kbps expected = 0;
    std::optional<Kbps> actual;
    bool match = false;
};

struct ScenarioReport {
    std::vector<ScenarioRow> rows;
    std::vector<AllocationEvent> events;

    std::size_t matched() const {
        std::size_t n = 0;
        for (const auto& r : rows) n += r.match ? 1 : 0;
        return n;
    }
    bool all_matched() const { return matched() == rows.size(); }
};

struct SimulationOptions {
    std::filesystem::path workdir;
    std::optional<std::filesystem::path> categories; ///< generated from educational_hosts when absent
    std::optional<std::filesystem::path> log_out;    ///< defaults to workdir/access.log
    MatchMode match_mode = MatchMode::suffix;
    StatusMode status_mode = StatusMode::any_200;
};

/// Writes the scenario's log, category list and a fresh configuration (every
/// user at its initial bandwidth), runs one cycle, then reads the written
/// configuration back and compares each user against the expected value.
inline ScenarioReport run_scenario(const Scenario& sc, const SimulationOptions& opts, std::ostream& diag = std::cerr) {
    namespace fs = std::filesystem;
    fs::create_directories(opts.workdir);
    const GeneratedLog log = generate_log(sc);

    RuntimeConfig rc;
    rc.log_path = opts.log_out.value_or(opts.workdir / "access.log");
    rc.config_path = opts.workdir / "config.xml";
    rc.bw_min = sc.bw_min;
    rc.match_mode = opts.match_mode;
    rc.status_mode = opts.status_mode;
    rc.truncate_log = false;
    rc.sanitize = false; // scripted initial values may sit anywhere

    if (opts.categories) {
        rc.category_path = *opts.categories;
    } else {
        rc.category_path = opts.workdir / "categories.txt";
        std::string list;
        for (const auto& h : sc.educational_hosts) list += extract_host("http://" + h + "/").value_or(h) + '\n';
        atomic_write(rc.category_path, list);
    }
    const CategoryIndex index = CategoryIndex::load(rc.category_path);
    for (const auto& h : sc.educational_hosts) {
        auto host = extract_host("http://" + h + "/");
        if (!host || !is_educational(index, *host, MatchMode::suffix))
            throw InvalidScenario("educational host " + h + " is not in the category list");
    }
    for (const auto& h : sc.other_hosts) {
        auto host = extract_host("http://" + h + "/");
        if (!host || is_educational(index, *host, MatchMode::suffix))
            throw InvalidScenario("other host " + h + " is in the category list");
    }

    std::vector<AllowedIpEntry> entries;
    for (std::size_t i = 0; i < sc.users.size(); ++i) {
        const Kbps init = sc.users[i].initial_bw.value_or(sc.bw_min);
        entries.push_back({sc.users[i].ip, 32, "Simulated user " + std::to_string(i + 1), init, init});
    }
    atomic_write(rc.config_path, render_allowedip_config(entries));
    atomic_write(rc.log_path, log.text());

    FixedClock clock(sc.time_base + std::chrono::seconds(log.lines.size()));
    Engine engine(rc, clock, diag);
    ScenarioReport report;
    report.events = engine.start();
    auto events = engine.tick();
    report.events.insert(report.events.end(), events.begin(), events.end());

    const ConfigDocument written = load_config(rc.config_path);
    for (const auto& u : sc.users) {
        ScenarioRow row;
        row.ip = u.ip;
        row.scripted_nes = u.educational_views;
        row.scripted_tsa = u.total_views();
        if (const UserStats* s = engine.stats().find(u.ip)) {
            row.nes = s->nes;
            row.tsa = s->tsa;
        }
        row.initial = u.initial_bw.value_or(sc.bw_min);
        row.expected = u.total_views() == 0 ? row.initial
                                            : compute_allocation(sc.bw_min, u.educational_views, u.total_views());
        row.actual = written.current_bandwidth(u.ip);
        row.match = row.actual == row.expected && row.nes == row.scripted_nes && row.tsa == row.scripted_tsa;
        report.rows.push_back(row);
    }
    return report;
}

inline std::string format_report(const ScenarioReport& report) {
    std::string out = "ip               initial  nes  tsa  expected  actual  match\n";
    char line[128];
    for (const auto& r : report.rows) {
        const std::string actual = r.actual ? std::to_string(*r.actual) : "-";
        std::snprintf(line, sizeof line, "%-15s  %7u  %3llu  %3llu  %8u  %6s  %s\n", r.ip.to_string().c_str(), r.initial,
                      static_cast<unsigned long long>(r.nes), static_cast<unsigned long long>(r.tsa), r.expected,
                      actual.c_str(), r.match ? "yes" : "NO");
        out += line;
    }
    out += "matched " + std::to_string(report.matched()) + "/" + std::to_string(report.rows.size()) + "\n";
    return out;
}

} // namespace abms
