#pragma once

// The control loop: tail the proxy log, count educational and total page
// views per client, recompute each touched client's allocation, push changed
// values into the firewall configuration and report every change.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "abms/allocation.hpp"
#include "abms/clock.hpp"
#include "abms/config_store.hpp"
#include "abms/domain_index.hpp"
#include "abms/errors.hpp"
#include "abms/log_ingest.hpp"
#include "abms/usage_stats.hpp"

namespace abms {

struct RuntimeConfig {
    std::filesystem::path log_path = "/var/squid/logs/access.log";
    std::filesystem::path category_path = "shallalist-educational.txt";
    std::filesystem::path config_path = "/cf/conf/config.xml";
    unsigned poll_interval_seconds = 5;
    std::optional<Kbps> bw_min;
    std::optional<std::uint64_t> tbi;
    std::optional<std::uint64_t> enu;
    MatchMode match_mode = MatchMode::suffix;
    StatusMode status_mode = StatusMode::any_200;
    ClockTime reset_time{};
    bool truncate_log = true;
    bool dry_run = false;
    bool sanitize = true; ///< clamp out-of-range entries to bw_min at startup
    std::optional<std::filesystem::path> snapshot_path;
    std::string post_write_hook;
    std::size_t backup_keep = 10;

    /// Validates the bandwidth settings and returns the resulting policy.
    /// Exactly one of bw_min or the (tbi, enu) pair must be set.
    AllocationPolicy policy() const {
        const bool has_pair = tbi.has_value() || enu.has_value();
        if (bw_min && has_pair) throw std::invalid_argument("give either a minimum bandwidth or total bandwidth and user count, not both");
        if (bw_min) return AllocationPolicy::fixed(*bw_min);
        if (!tbi || !enu) throw std::invalid_argument("a minimum bandwidth, or both total bandwidth and user count, is required");
        return AllocationPolicy::from_capacity(*tbi, *enu);
    }

    void validate() const {
        policy();
        if (poll_interval_seconds < 1) throw std::invalid_argument("poll interval must be at least 1 second");
    }
};

struct AllocationEvent {
    LocalTime timestamp;
    Ipv4 ip;
    Kbps old_bw = 0;
    Kbps new_bw = 0;
    Direction direction = Direction::increased;
    bool simulated = false; ///< produced by a dry run; nothing was written
};

/// "[MM/DD/YYYY hh:mm:ss] IP increased from 512Kbps to 922Kbps." with a
/// 12-hour clock and no AM/PM marker.
inline std::string format_event(const AllocationEvent& ev) {
    if (ev.old_bw == ev.new_bw) throw std::invalid_argument("event with unchanged bandwidth");
    if ((ev.new_bw > ev.old_bw) != (ev.direction == Direction::increased))
        throw std::invalid_argument("event direction disagrees with its values");
    using namespace std::chrono;
    const auto day = floor<days>(ev.timestamp);
    const year_month_day ymd{day};
    const hh_mm_ss hms{ev.timestamp - day};
    long hour = hms.hours().count() % 12;
    if (hour == 0) hour = 12;
    char stamp[32];
    std::snprintf(stamp, sizeof stamp, "[%02u/%02u/%04d %02ld:%02ld:%02ld]", static_cast<unsigned>(ymd.month()),
                  static_cast<unsigned>(ymd.day()), static_cast<int>(ymd.year()), hour,
                  static_cast<long>(hms.minutes().count()), static_cast<long>(hms.seconds().count()));
    return std::string(stamp) + ' ' + ev.ip.to_string() + ' ' + to_string(ev.direction) + " from " +
           std::to_string(ev.old_bw) + "Kbps to " + std::to_string(ev.new_bw) + "Kbps.";
}

/// Per-cycle counters, mostly for diagnostics and tests.
struct CycleReport {
    std::size_t records = 0;
    std::size_t malformed = 0;
    std::size_t countable = 0;
    std::size_t educational = 0;
    std::size_t bad_hosts = 0;
    bool committed = false;
    bool truncated = false;
};

class Engine {
public:
    Engine(RuntimeConfig config, const Clock& clock, std::ostream& diag = std::cerr)
        : cfg_(std::move(config)), clock_(clock), diag_(diag), policy_(cfg_.policy()) {
        cfg_.validate();
    }

    /// Loads the category list and configuration, restores a same-day
    /// snapshot when configured, and clamps out-of-range entries to the
    /// floor. Throws IoError/ParseError when an input cannot be used.
    std::vector<AllocationEvent> start() {
        index_ = CategoryIndex::load(cfg_.category_path);
        if (index_.skipped_entries() > 0)
            warn(std::to_string(index_.skipped_entries()) + " malformed entries skipped in " + cfg_.category_path.string());
        doc_ = load_config(cfg_.config_path);

        last_boundary_ = last_reset_boundary(clock_.local_now(), cfg_.reset_time);
        stats_ = StatsTable(date_of(last_boundary_));
        restore_snapshot();

        std::vector<AllocationEvent> events;
        if (!cfg_.sanitize) return events;
        ConfigDocument next = doc_;
        std::vector<BandwidthChange> changes;
        for (const auto& e : doc_.entries()) {
            if (policy_.within_bounds(e.bw_down) && policy_.within_bounds(e.bw_up)) continue;
            const auto outcome = next.apply_bandwidth(e.ip, policy_.bw_min);
            if (const auto* c = std::get_if<BandwidthChange>(&outcome)) changes.push_back(*c);
        }
        if (!changes.empty() && !commit(next))
            throw IoError("cannot write sanitized configuration to " + cfg_.config_path.string());
        return to_events(changes);
    }

    /// Processes newly appended log lines and applies the resulting
    /// allocations. I/O failures are reported and leave counters intact; a
    /// failed write keeps the affected clients pending for the next cycle.
    std::vector<AllocationEvent> run_cycle() {
        last_ = CycleReport{};
        LogBatch batch;
        try {
            batch = read_new_records(cfg_.log_path, offset_);
        } catch (const IoError& e) {
            warn(e.what());
            return {};
        }
        if (batch.restarted) warn(cfg_.log_path.string() + " shrank; reading from the start");
        offset_ = batch.offset;
        last_.records = batch.records.size();
        last_.malformed = batch.malformed;
        if (batch.malformed > 0) warn("skipped " + std::to_string(batch.malformed) + " malformed log lines");

        for (const auto& rec : batch.records) {
            if (!is_countable(rec, cfg_.status_mode)) continue;
            const auto host = extract_host(rec.url);
            if (!host) {
                ++last_.bad_hosts;
                continue;
            }
            const bool educational = is_educational(index_, *host, cfg_.match_mode);
            ++last_.countable;
            last_.educational += educational ? 1 : 0;
            stats_.accumulate(rec.client_ip, educational);
            dirty_.insert(rec.client_ip);
        }

        ConfigDocument next = doc_;
        std::vector<BandwidthChange> changes;
        for (Ipv4 ip : dirty_) {
            const UserStats* s = stats_.find(ip);
            if (!s) continue;
            const auto outcome = next.apply_bandwidth(ip, policy_.allocate(s->nes, s->tsa));
            if (const auto* c = std::get_if<BandwidthChange>(&outcome))
                changes.push_back(*c);
            else if (std::get<NoChange>(outcome) == NoChange::ip_unknown && warned_.insert(ip).second)
                warn(ip.to_string() + " has no allowedip entry in " + cfg_.config_path.string());
        }
        if (!changes.empty()) {
            if (!commit(next)) return {};
            last_.committed = true;
        }
        dirty_.clear();

        if (cfg_.truncate_log && !cfg_.dry_run && batch.file_size > 0 && batch.consumed_all()) truncate_log();
        persist();
        return to_events(changes);
    }

    /// Once per day at the configured reset time: every entry returns to the
    /// floor and all counters are discarded. A failed write defers the reset.
    std::vector<AllocationEvent> maybe_daily_reset() {
        const LocalTime boundary = last_reset_boundary(clock_.local_now(), cfg_.reset_time);
        if (boundary <= last_boundary_) return {};

        ConfigDocument next = doc_;
        std::vector<BandwidthChange> changes;
        for (const auto& e : doc_.entries()) {
            const auto outcome = next.apply_bandwidth(e.ip, policy_.bw_min);
            if (const auto* c = std::get_if<BandwidthChange>(&outcome)) changes.push_back(*c);
        }
        if (!changes.empty() && !commit(next)) return {};

        stats_.reset_all(date_of(boundary));
        dirty_.clear();
        warned_.clear();
        last_boundary_ = boundary;
        persist();
        return to_events(changes);
    }

    std::vector<AllocationEvent> tick() {
        auto events = maybe_daily_reset();
        auto more = run_cycle();
        events.insert(events.end(), more.begin(), more.end());
        return events;
    }

    const RuntimeConfig& config() const { return cfg_; }
    const AllocationPolicy& policy() const { return policy_; }
    const StatsTable& stats() const { return stats_; }
    const ConfigDocument& document() const { return doc_; }
    const CategoryIndex& index() const { return index_; }
    std::uint64_t log_offset() const { return offset_; }
    const CycleReport& last_cycle() const { return last_; }

private:
    void warn(const std::string& msg) { diag_ << "abms: " << msg << '\n'; }

    // Backs up, writes and adopts `next`; in a dry run only adopts it.
    bool commit(ConfigDocument& next) {
        if (!cfg_.dry_run) {
            try {
                backup_config(cfg_.config_path, clock_.utc_now(), cfg_.backup_keep);
                write_config(next, cfg_.config_path);
            } catch (const std::exception& e) {
                warn(std::string("configuration not updated: ") + e.what());
                return false;
            }
            if (!cfg_.post_write_hook.empty()) {
                const int rc = std::system(cfg_.post_write_hook.c_str());
                if (rc != 0) warn("post-write hook exited with status " + std::to_string(rc));
            }
        }
        doc_ = std::move(next);
        return true;
    }

    void truncate_log() {
        std::error_code ec;
        const auto size = std::filesystem::file_size(cfg_.log_path, ec);
        if (ec || size != offset_) return; // appended since the read
        std::filesystem::resize_file(cfg_.log_path, 0, ec);
        if (ec) {
            warn("cannot truncate " + cfg_.log_path.string() + ": " + ec.message());
            return;
        }
        offset_ = 0;
        last_.truncated = true;
    }

    std::filesystem::path offset_path() const { return cfg_.snapshot_path->string() + ".offset"; }

    void persist() {
        if (!cfg_.snapshot_path || cfg_.dry_run) return;
        try {
            atomic_write(*cfg_.snapshot_path, snapshot(stats_));
            atomic_write(offset_path(), std::to_string(offset_) + '\n');
        } catch (const IoError& e) {
            warn(e.what());
        }
    }

    void restore_snapshot() {
        if (!cfg_.snapshot_path || !std::filesystem::exists(*cfg_.snapshot_path)) return;
        StatsTable restored = restore(read_file(*cfg_.snapshot_path));
        if (restored.day() != stats_.day()) return; // stale: a reset happened meanwhile
        stats_ = std::move(restored);
        for (const auto& [ip, s] : stats_.entries()) dirty_.insert(ip);
        if (std::filesystem::exists(offset_path())) {
            if (auto off = detail::parse_int<std::uint64_t>(text::trim(read_file(offset_path())))) offset_ = *off;
        }
    }

    std::vector<AllocationEvent> to_events(const std::vector<BandwidthChange>& changes) const {
        std::vector<AllocationEvent> events;
        const LocalTime now = clock_.local_now();
        for (const auto& c : changes) events.push_back({now, c.ip, c.old_bw, c.new_bw, c.direction, cfg_.dry_run});
        return events;
    }

    RuntimeConfig cfg_;
    const Clock& clock_;
    std::ostream& diag_;
    AllocationPolicy policy_;

    CategoryIndex index_;
    ConfigDocument doc_;
    StatsTable stats_;
    std::set<Ipv4> dirty_;   ///< clients whose allocation must be recomputed
    std::set<Ipv4> warned_;  ///< clients already reported as missing from the config today
    std::uint64_t offset_ = 0;
    LocalTime last_boundary_{};
    CycleReport last_;
};

} // namespace abms
