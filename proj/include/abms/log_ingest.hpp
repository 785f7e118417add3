#pragma once

// Squid native access.log ingestion: tokenizing, web-usage cleaning, host
// normalization and incremental reading of an appended-to log file.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "abms/errors.hpp"
#include "abms/ipv4.hpp"
#include "abms/text.hpp"

namespace abms {

/// One access.log line. Fields are bound positionally from the squid
/// native layout:
///
///   time elapsed client code/status bytes method url ident hierarchy type
struct LogRecord {
    std::int64_t timestamp_ms = 0; ///< epoch milliseconds
    std::int64_t elapsed_ms = 0;
    Ipv4 client_ip;
    std::string result_code; ///< e.g. TCP_MISS/200
    std::uint64_t bytes = 0;
    std::string method;
    std::string url;
    std::string content_type; ///< MIME type or "-"

    std::string_view cache_tag() const {
        std::string_view rc = result_code;
        return rc.substr(0, rc.find('/'));
    }
    std::string_view status() const {
        std::string_view rc = result_code;
        return rc.substr(rc.find('/') + 1);
    }

    friend bool operator==(const LogRecord&, const LogRecord&) = default;
};

/// Which status-200 records count as page views.
enum class StatusMode {
    any_200,       ///< any cache tag with status 200
    tcp_miss_only, ///< only TCP_MISS/200, as the original prototype checked
};

inline constexpr std::size_t kLogFieldCount = 10;

namespace detail {

inline std::optional<std::int64_t> parse_epoch_ms(std::string_view s) {
    const auto dot = s.find('.');
    const std::string_view whole = s.substr(0, dot);
    std::int64_t seconds = 0;
    auto [p, ec] = std::from_chars(whole.data(), whole.data() + whole.size(), seconds);
    if (ec != std::errc{} || p != whole.data() + whole.size() || whole.empty() || seconds < 0) return std::nullopt;
    std::int64_t millis = 0;
    if (dot != std::string_view::npos) {
        const std::string_view frac = s.substr(dot + 1);
        if (frac.empty()) return std::nullopt;
        int scale = 100;
        for (char c : frac) {
            if (c < '0' || c > '9') return std::nullopt;
            millis += (c - '0') * scale;
            scale /= 10;
        }
    }
    return seconds * 1000 + millis;
}

template <typename Int>
std::optional<Int> parse_int(std::string_view s) {
    Int value{};
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || p != s.data() + s.size() || s.empty()) return std::nullopt;
    return value;
}

inline bool valid_result_code(std::string_view rc) {
    const auto slash = rc.find('/');
    if (slash == std::string_view::npos || slash == 0) return false;
    if (rc.find('/', slash + 1) != std::string_view::npos) return false;
    const std::string_view status = rc.substr(slash + 1);
    if (status.size() != 3) return false;
    for (char c : status)
        if (c < '0' || c > '9') return false;
    return true;
}

/// Path portion of a URL (no scheme, authority, query or fragment).
inline std::string_view url_path(std::string_view url) {
    const auto scheme = url.find("://");
    if (scheme != std::string_view::npos) url.remove_prefix(scheme + 3);
    const auto slash = url.find('/');
    if (slash == std::string_view::npos) return {};
    url.remove_prefix(slash);
    return url.substr(0, url.find_first_of("?#"));
}

} // namespace detail

/// Parses one squid native log line. Returns nullopt for anything that does
/// not have exactly ten fields, a valid client IPv4, a numeric timestamp,
/// numeric elapsed/bytes and a CACHE/NNN result code.
inline std::optional<LogRecord> parse_log_line(std::string_view line) {
    const auto tokens = text::split_ws(line);
    if (tokens.size() != kLogFieldCount) return std::nullopt;

    LogRecord r;
    auto ts = detail::parse_epoch_ms(tokens[0]);
    auto elapsed = detail::parse_int<std::int64_t>(tokens[1]);
    auto ip = Ipv4::parse(tokens[2]);
    auto bytes = detail::parse_int<std::uint64_t>(tokens[4]);
    if (!ts || !elapsed || !ip || !bytes || !detail::valid_result_code(tokens[3])) return std::nullopt;

    r.timestamp_ms = *ts;
    r.elapsed_ms = *elapsed;
    r.client_ip = *ip;
    r.result_code = tokens[3];
    r.bytes = *bytes;
    r.method = tokens[5];
    r.url = tokens[6];
    r.content_type = tokens[kLogFieldCount - 1];
    return r;
}

inline constexpr std::string_view kExcludedExtensions[] = {".gif", ".jpeg", ".jpg", ".css", ".js"};

/// True when the record is a successful GET of an HTML page that is not a
/// static asset. Only such records are counted as site visits.
inline bool is_countable(const LogRecord& r, StatusMode mode = StatusMode::any_200) {
    if (r.method != "GET") return false;
    if (mode == StatusMode::tcp_miss_only) {
        if (r.result_code != "TCP_MISS/200") return false;
    } else if (r.status() != "200") {
        return false;
    }
    if (r.content_type.find("text/html") == std::string::npos) return false;
    const std::string_view path = detail::url_path(r.url);
    for (std::string_view ext : kExcludedExtensions)
        if (text::iends_with(path, ext)) return false;
    return true;
}

/// Lowercased host of a URL with scheme, userinfo, port, path and query
/// removed and one leading "www." dropped. URLs without a scheme are read
/// host-first ("example.com:443").
inline std::optional<std::string> extract_host(std::string_view url) {
    url = text::trim(url);
    const auto scheme = url.find("://");
    if (scheme != std::string_view::npos) url.remove_prefix(scheme + 3);
    std::string_view authority = url.substr(0, url.find_first_of("/?#"));
    if (const auto at = authority.rfind('@'); at != std::string_view::npos) authority.remove_prefix(at + 1);
    if (!authority.empty() && authority.front() == '[') return std::nullopt; // IPv6 literal
    authority = authority.substr(0, authority.find(':'));
    while (!authority.empty() && authority.back() == '.') authority.remove_suffix(1);

    std::string host = text::lower(authority);
    if (host.starts_with("www.")) host.erase(0, 4);

    bool has_alnum = false;
    for (char c : host) {
        const bool alnum = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9');
        if (!alnum && c != '.' && c != '-' && c != '_') return std::nullopt;
        has_alnum = has_alnum || alnum;
    }
    if (!has_alnum || host.front() == '.') return std::nullopt;
    return host;
}

/// Result of one incremental read.
struct LogBatch {
    std::vector<LogRecord> records;
    std::uint64_t offset = 0;     ///< byte offset after the last complete line
    std::uint64_t file_size = 0;  ///< size observed when reading
    std::size_t malformed = 0;    ///< non-blank lines that failed to parse
    bool restarted = false;       ///< file shrank below the resume offset

    bool consumed_all() const { return offset == file_size; }
};

/// Parses complete lines appended after `resume_offset`. A trailing partial
/// line is left for the next call. If the file is now shorter than
/// `resume_offset` it is assumed truncated and read from the start.
inline LogBatch read_new_records(const std::filesystem::path& log_path, std::uint64_t resume_offset) {
    std::error_code ec;
    const auto size = std::filesystem::file_size(log_path, ec);
    if (ec) throw IoError("cannot stat " + log_path.string() + ": " + ec.message());

    LogBatch batch;
    batch.file_size = size;
    if (size < resume_offset) {
        resume_offset = 0;
        batch.restarted = true;
    }
    batch.offset = resume_offset;
    if (size == resume_offset) return batch;

    std::ifstream in(log_path, std::ios::binary);
    if (!in) throw IoError("cannot open " + log_path.string());
    in.seekg(static_cast<std::streamoff>(resume_offset));
    std::string chunk(size - resume_offset, '\0');
    in.read(chunk.data(), static_cast<std::streamsize>(chunk.size()));
    chunk.resize(static_cast<std::size_t>(in.gcount()));
    if (in.bad()) throw IoError("read failed on " + log_path.string());

    const auto last_newline = chunk.rfind('\n');
    if (last_newline == std::string::npos) return batch;

    std::string_view complete(chunk.data(), last_newline + 1);
    while (!complete.empty()) {
        const auto nl = complete.find('\n');
        const std::string_view line = complete.substr(0, nl);
        complete.remove_prefix(nl + 1);
        if (text::trim(line).empty()) continue;
        if (auto rec = parse_log_line(line))
            batch.records.push_back(std::move(*rec));
        else
            ++batch.malformed;
    }
    batch.offset = resume_offset + last_newline + 1;
    return batch;
}

} // namespace abms
