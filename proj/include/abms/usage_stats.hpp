#pragma once

#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <string_view>

#include "abms/clock.hpp"
#include "abms/errors.hpp"
#include "abms/ipv4.hpp"
#include "abms/log_ingest.hpp"
#include "abms/text.hpp"

namespace abms {

/// Daily page-view counters for one client. Invariant: nes <= tsa.
struct UserStats {
    Ipv4 client_ip;
    std::uint64_t nes = 0; ///< educational views
    std::uint64_t tsa = 0; ///< all countable views

    friend bool operator==(const UserStats&, const UserStats&) = default;
};

/// Per-client counters for a single day, keyed by IP in address order.
class StatsTable {
public:
    explicit StatsTable(Date day = Date{}) : day_(day) {}

    void accumulate(Ipv4 ip, bool educational) {
        auto [it, inserted] = entries_.try_emplace(ip, UserStats{ip});
        ++it->second.tsa;
        if (educational) ++it->second.nes;
    }

    /// Drops every counter. Unconditional; callers decide when a day ends.
    void reset_all(Date new_day) {
        entries_.clear();
        day_ = new_day;
    }

    const UserStats* find(Ipv4 ip) const {
        auto it = entries_.find(ip);
        return it == entries_.end() ? nullptr : &it->second;
    }

    Date day() const { return day_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    const std::map<Ipv4, UserStats>& entries() const { return entries_; }

    std::uint64_t total_views() const {
        std::uint64_t sum = 0;
        for (const auto& [ip, s] : entries_) sum += s.tsa;
        return sum;
    }

    friend bool operator==(const StatsTable&, const StatsTable&) = default;

private:
    friend StatsTable restore(std::string_view);

    Date day_;
    std::map<Ipv4, UserStats> entries_;
};

/// "YYYY-MM-DD\n" followed by one "ip nes tsa\n" line per client.
inline std::string snapshot(const StatsTable& table) {
    std::string out = format_date(table.day()) + '\n';
    for (const auto& [ip, s] : table.entries())
        out += ip.to_string() + ' ' + std::to_string(s.nes) + ' ' + std::to_string(s.tsa) + '\n';
    return out;
}

inline StatsTable restore(std::string_view snapshot_text) {
    std::istringstream in{std::string(snapshot_text)};
    std::string line;
    if (!std::getline(in, line)) throw ParseError("snapshot: missing day header");
    auto day = parse_date(text::trim(line));
    if (!day) throw ParseError("snapshot: bad day header '" + line + "'");

    StatsTable table(*day);
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        const auto fields = text::split_ws(line);
        const auto where = "snapshot line " + std::to_string(line_no);
        if (fields.size() != 3) throw ParseError(where + ": expected 'ip nes tsa'");
        auto ip = Ipv4::parse(fields[0]);
        auto nes = detail::parse_int<std::uint64_t>(fields[1]);
        auto tsa = detail::parse_int<std::uint64_t>(fields[2]);
        if (!ip || !nes || !tsa) throw ParseError(where + ": malformed field");
        if (*nes > *tsa) throw ParseError(where + ": nes exceeds tsa");
        if (!table.entries_.try_emplace(*ip, UserStats{*ip, *nes, *tsa}).second)
            throw ParseError(where + ": duplicate ip " + ip->to_string());
    }
    return table;
}

} // namespace abms
