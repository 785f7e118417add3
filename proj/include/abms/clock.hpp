#pragma once

#include <chrono>
#include <cstdio>
#include <ctime>
#include <optional>
#include <string>
#include <string_view>

namespace abms {

using LocalTime = std::chrono::local_seconds;
using UtcTime = std::chrono::sys_seconds;
using Date = std::chrono::year_month_day;

/// Time source. Local wall-clock time drives day boundaries and event
/// stamps; UTC names backup files.
class Clock {
public:
    virtual ~Clock() = default;
    virtual UtcTime utc_now() const = 0;
    virtual LocalTime local_now() const = 0;
};

class SystemClock final : public Clock {
public:
    UtcTime utc_now() const override {
        return std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now());
    }
    LocalTime local_now() const override {
        const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        std::tm tm{};
        localtime_r(&t, &tm);
        using namespace std::chrono;
        const local_days day{year{tm.tm_year + 1900} / (tm.tm_mon + 1) / tm.tm_mday};
        return day + hours{tm.tm_hour} + minutes{tm.tm_min} + seconds{tm.tm_sec};
    }
};

/// Manually driven clock for tests and simulation; local time equals UTC.
class FixedClock final : public Clock {
public:
    explicit FixedClock(LocalTime t) : now_(t) {}
    UtcTime utc_now() const override { return UtcTime{now_.time_since_epoch()}; }
    LocalTime local_now() const override { return now_; }
    void set(LocalTime t) { now_ = t; }
    void advance(std::chrono::seconds d) { now_ += d; }

private:
    LocalTime now_;
};

inline Date date_of(LocalTime t) { return Date{std::chrono::floor<std::chrono::days>(t)}; }

/// YYYY-MM-DD
inline std::string format_date(Date d) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()), static_cast<unsigned>(d.month()),
                  static_cast<unsigned>(d.day()));
    return buf;
}

inline std::optional<Date> parse_date(std::string_view s) {
    int y = 0;
    unsigned m = 0, d = 0;
    char tail = 0;
    const std::string str(s);
    if (s.size() != 10 || std::sscanf(str.c_str(), "%4d-%2u-%2u%c", &y, &m, &d, &tail) != 3) return std::nullopt;
    const Date date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!date.ok()) return std::nullopt;
    return date;
}

/// "YYYY-MM-DD hh:mm:ss" (a 'T' separator is also accepted).
inline std::optional<LocalTime> parse_local_time(std::string_view s) {
    if (s.size() != 19 || (s[10] != ' ' && s[10] != 'T')) return std::nullopt;
    auto date = parse_date(s.substr(0, 10));
    if (!date) return std::nullopt;
    unsigned h = 0, mi = 0, se = 0;
    char tail = 0;
    const std::string str(s.substr(11));
    if (std::sscanf(str.c_str(), "%2u:%2u:%2u%c", &h, &mi, &se, &tail) != 3) return std::nullopt;
    if (h > 23 || mi > 59 || se > 59) return std::nullopt;
    using namespace std::chrono;
    return local_days{*date} + hours{h} + minutes{mi} + seconds{se};
}

/// Time of day used for the daily reset.
struct ClockTime {
    int hour = 0;
    int minute = 0;

    static std::optional<ClockTime> parse(std::string_view s) {
        unsigned h = 0, m = 0;
        char tail = 0;
        const std::string str(s);
        if (s.size() != 5 || s[2] != ':' || std::sscanf(str.c_str(), "%2u:%2u%c", &h, &m, &tail) != 2) return std::nullopt;
        if (h > 23 || m > 59) return std::nullopt;
        return ClockTime{static_cast<int>(h), static_cast<int>(m)};
    }

    std::chrono::minutes since_midnight() const { return std::chrono::hours{hour} + std::chrono::minutes{minute}; }
};

/// The most recent instant at or before `now` at which the daily reset fires.
inline LocalTime last_reset_boundary(LocalTime now, ClockTime reset) {
    using namespace std::chrono;
    const auto midnight = floor<days>(now);
    LocalTime boundary = midnight + reset.since_midnight();
    if (boundary > now) boundary -= days{1};
    return boundary;
}

} // namespace abms
