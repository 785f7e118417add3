// abms: adaptive bandwidth manager command line.
//
//   abms run          poll the proxy log and adjust allocations until interrupted
//   abms once         one cycle, then exit
//   abms simulate     generate a scripted log and replay it end to end
//   abms check-config validate inputs and exit

#include <atomic>
#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <thread>

#include <unistd.h>

#include "CLI11.hpp"
#include "abms/clock.hpp"
#include "abms/config_store.hpp"
#include "abms/domain_index.hpp"
#include "abms/orchestrator.hpp"
#include "abms/simulator.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitStartup = 2;
constexpr int kExitMismatch = 3;

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop.store(true); }

struct CommonFlags {
    abms::RuntimeConfig rc;
    std::string reset_time = "00:00";
    std::string now;
    std::string snapshot;
    bool no_truncate = false;
    bool no_sanitize = false;
};

const std::map<std::string, abms::MatchMode> kMatchModes{{"suffix", abms::MatchMode::suffix},
                                                         {"substring", abms::MatchMode::substring}};
const std::map<std::string, abms::StatusMode> kStatusModes{{"any-200", abms::StatusMode::any_200},
                                                           {"tcp-miss-only", abms::StatusMode::tcp_miss_only}};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_now) {
    auto& rc = f.rc;
    cmd->add_option("--log", rc.log_path, "Proxy access log")->capture_default_str();
    cmd->add_option("--categories", rc.category_path, "Educational domain list, one domain per line")->capture_default_str();
    cmd->add_option("--config", rc.config_path, "Firewall configuration XML")->capture_default_str();
    cmd->add_option("--bw-min", rc.bw_min, "Minimum per-user bandwidth (Kbps)");
    cmd->add_option("--tbi", rc.tbi, "Total institutional bandwidth (Kbps); floor = tbi / enu");
    cmd->add_option("--enu", rc.enu, "Estimated number of users");
    cmd->add_option("--interval", rc.poll_interval_seconds, "Poll interval in seconds")->capture_default_str();
    cmd->add_option("--match-mode", rc.match_mode, "Domain matching: suffix or substring")
        ->transform(CLI::CheckedTransformer(kMatchModes, CLI::ignore_case));
    cmd->add_option("--status-mode", rc.status_mode, "Countable statuses: any-200 or tcp-miss-only")
        ->transform(CLI::CheckedTransformer(kStatusModes, CLI::ignore_case));
    cmd->add_option("--reset-time", f.reset_time, "Local time of the daily reset (HH:MM)")->capture_default_str();
    cmd->add_flag("--no-truncate", f.no_truncate, "Keep the access log instead of emptying it after each cycle");
    cmd->add_flag("--dry-run", rc.dry_run, "Compute and report changes without touching any file");
    cmd->add_option("--snapshot", f.snapshot, "Persist daily counters to this file");
    cmd->add_option("--post-write-hook", rc.post_write_hook, "Shell command run after each configuration write");
    cmd->add_option("--backup-keep", rc.backup_keep, "Configuration backups to retain (0 = all)")->capture_default_str();
    cmd->add_flag("--no-sanitize", f.no_sanitize, "Leave out-of-range entries alone at startup");
    if (with_now) cmd->add_option("--now", f.now, "Fixed local time 'YYYY-MM-DD hh:mm:ss' instead of the system clock");
}

// Returns an exit code when flag values are unusable.
std::optional<int> finish_common(CommonFlags& f) {
    auto reset = abms::ClockTime::parse(f.reset_time);
    if (!reset) {
        std::cerr << "abms: --reset-time must be HH:MM\n";
        return kExitUsage;
    }
    f.rc.reset_time = *reset;
    f.rc.truncate_log = !f.no_truncate;
    f.rc.sanitize = !f.no_sanitize;
    if (!f.snapshot.empty()) f.rc.snapshot_path = f.snapshot;
    return std::nullopt;
}

void print(const std::vector<abms::AllocationEvent>& events) {
    for (const auto& ev : events) std::cout << abms::format_event(ev) << '\n';
    std::cout.flush();
}

int cmd_engine(CommonFlags& f, bool loop) {
    if (auto rc = finish_common(f)) return *rc;

    std::unique_ptr<abms::Clock> clock;
    if (!f.now.empty()) {
        auto t = abms::parse_local_time(f.now);
        if (!t) {
            std::cerr << "abms: --now must be 'YYYY-MM-DD hh:mm:ss'\n";
            return kExitUsage;
        }
        clock = std::make_unique<abms::FixedClock>(*t);
    } else {
        clock = std::make_unique<abms::SystemClock>();
    }

    std::unique_ptr<abms::Engine> engine;
    try {
        engine = std::make_unique<abms::Engine>(f.rc, *clock);
        print(engine->start());
    } catch (const std::exception& e) {
        std::cerr << "abms: " << e.what() << '\n';
        return kExitStartup;
    }

    if (!loop) {
        const auto events = engine->tick();
        print(events);
        if (f.rc.dry_run)
            std::cerr << "abms: dry run, " << events.size() << " simulated change(s); nothing written\n";
        return kExitOk;
    }

    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cerr << "abms: running bandwidth manager every " << f.rc.poll_interval_seconds
              << "s; press CTRL+C to stop\n";
    const auto interval = std::chrono::seconds(f.rc.poll_interval_seconds);
    while (!g_stop.load()) {
        const auto next = std::chrono::steady_clock::now() + interval;
        print(engine->tick());
        while (!g_stop.load() && std::chrono::steady_clock::now() < next)
            std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }
    std::cerr << "abms: stopped\n";
    return kExitOk;
}

int cmd_check(CommonFlags& f, bool categories_given) {
    if (auto rc = finish_common(f)) return *rc;
    try {
        std::optional<abms::AllocationPolicy> policy;
        if (f.rc.bw_min || f.rc.tbi || f.rc.enu) {
            f.rc.validate();
            policy = f.rc.policy();
        }
        const auto doc = abms::load_config(f.rc.config_path);
        std::cout << f.rc.config_path.string() << ": " << doc.entries().size() << " allowedip entries\n";
        if (policy) {
            for (const auto& e : doc.entries())
                if (!policy->within_bounds(e.bw_down) || !policy->within_bounds(e.bw_up))
                    std::cout << "  " << e.ip << " at " << e.bw_down << "Kbps is outside [" << policy->bw_min << ", "
                              << policy->ceiling() << "]\n";
            std::cout << "minimum bandwidth " << policy->bw_min << "Kbps, ceiling " << policy->ceiling() << "Kbps\n";
        }
        if (categories_given) {
            const auto index = abms::CategoryIndex::load(f.rc.category_path);
            std::cout << f.rc.category_path.string() << ": " << index.entry_count() << " domains ("
                      << index.skipped_entries() << " malformed)\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "abms: " << e.what() << '\n';
        return kExitStartup;
    }
    return kExitOk;
}

struct SimulateFlags {
    std::string scenario;
    std::string out;
    std::string report;
    std::string categories;
    std::string workdir;
    abms::MatchMode match_mode = abms::MatchMode::suffix;
    abms::StatusMode status_mode = abms::StatusMode::any_200;
};

int cmd_simulate(const SimulateFlags& f) {
    try {
        const auto scenario = abms::load_scenario(f.scenario);
        abms::SimulationOptions opts;
        opts.workdir = f.workdir.empty()
                           ? std::filesystem::temp_directory_path() / ("abms-sim-" + std::to_string(::getpid()))
                           : std::filesystem::path(f.workdir);
        if (!f.out.empty()) opts.log_out = f.out;
        if (!f.categories.empty()) opts.categories = f.categories;
        opts.match_mode = f.match_mode;
        opts.status_mode = f.status_mode;

        const auto report = abms::run_scenario(scenario, opts);
        print(report.events);
        const std::string text = abms::format_report(report);
        if (f.report.empty()) {
            std::cout << text;
        } else {
            abms::atomic_write(f.report, text);
            std::cerr << "abms: matched " << report.matched() << "/" << report.rows.size() << "\n";
        }
        if (f.workdir.empty()) std::filesystem::remove_all(opts.workdir);
        return report.all_matched() ? kExitOk : kExitMismatch;
    } catch (const std::exception& e) {
        std::cerr << "abms: " << e.what() << '\n';
        return kExitStartup;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adaptive bandwidth manager: raises per-user caps for clients that browse educational sites"};
    app.require_subcommand(1);

    CommonFlags run_flags, once_flags, check_flags;
    auto* run = app.add_subcommand("run", "Poll the access log and adjust allocations until interrupted");
    add_common(run, run_flags, false);
    auto* once = app.add_subcommand("once", "Run a single cycle and exit");
    add_common(once, once_flags, true);
    auto* check = app.add_subcommand("check-config", "Validate the configuration and exit");
    add_common(check, check_flags, false);

    SimulateFlags sim;
    auto* simulate = app.add_subcommand("simulate", "Replay a scripted browsing scenario through the pipeline");
    simulate->add_option("--scenario", sim.scenario, "Scenario file")->required();
    simulate->add_option("--out", sim.out, "Where to write the generated access log");
    simulate->add_option("--report", sim.report, "Where to write the per-user report (default: stdout)");
    simulate->add_option("--categories", sim.categories, "Category list (default: built from the scenario hosts)");
    simulate->add_option("--workdir", sim.workdir, "Directory for the generated config and list (kept afterwards)");
    simulate->add_option("--match-mode", sim.match_mode, "suffix or substring")
        ->transform(CLI::CheckedTransformer(kMatchModes, CLI::ignore_case));
    simulate->add_option("--status-mode", sim.status_mode, "any-200 or tcp-miss-only")
        ->transform(CLI::CheckedTransformer(kStatusModes, CLI::ignore_case));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    if (*run) return cmd_engine(run_flags, true);
    if (*once) return cmd_engine(once_flags, false);
    if (*check) return cmd_check(check_flags, check->count("--categories") > 0);
    return cmd_simulate(sim);
}
