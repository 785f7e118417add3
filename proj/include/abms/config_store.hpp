#pragma once

// Firewall configuration holding per-client captive-portal bandwidth caps:
//
//   <allowedip>
//     <ip>172.16.5.20</ip>
//     <sn>32</sn>
//     <descr><![CDATA[User 1]]></descr>
//     <bw_up>512</bw_up>
//     <bw_down>512</bw_down>
//   </allowedip>
//
// The file carries the whole firewall state, so it is never re-serialized:
// ConfigDocument keeps the original bytes and only the text of bw_up/bw_down
// elements that were actually changed is replaced on output.

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "abms/allocation.hpp"
#include "abms/clock.hpp"
#include "abms/errors.hpp"
#include "abms/ipv4.hpp"
#include "abms/log_ingest.hpp"
#include "abms/xml_scan.hpp"

namespace abms {

struct AllowedIpEntry {
    Ipv4 ip;
    std::optional<int> sn;
    std::string descr;
    Kbps bw_up = 0;
    Kbps bw_down = 0;

    friend bool operator==(const AllowedIpEntry&, const AllowedIpEntry&) = default;
};

enum class Direction { increased, decreased };

inline const char* to_string(Direction d) { return d == Direction::increased ? "increased" : "decreased"; }

struct BandwidthChange {
    Ipv4 ip;
    Kbps old_bw = 0;
    Kbps new_bw = 0;
    Direction direction = Direction::increased;

    friend bool operator==(const BandwidthChange&, const BandwidthChange&) = default;
};

enum class NoChange {
    ip_unknown, ///< no allowedip entry for the address
    unchanged,  ///< entry already at the requested value
};

using ApplyOutcome = std::variant<BandwidthChange, NoChange>;

class ConfigDocument {
public:
    /// Throws ParseError on malformed XML, an allowedip without ip/bw_up/bw_down,
    /// a non-positive bandwidth or a duplicated ip.
    static ConfigDocument parse(std::string bytes) {
        ConfigDocument doc;
        doc.original_ = std::move(bytes);
        const std::string_view src = doc.original_;
        const auto elements = xml::scan(src);

        for (const auto& el : elements) {
            if (el.name != "allowedip") continue;
            const xml::Element* fields[5] = {};
            static constexpr std::string_view kNames[5] = {"ip", "sn", "descr", "bw_up", "bw_down"};
            for (int child : el.children) {
                const auto& c = elements[static_cast<std::size_t>(child)];
                for (int k = 0; k < 5; ++k) {
                    if (c.name != kNames[k]) continue;
                    if (fields[k]) throw ParseError("allowedip has more than one <" + c.name + ">");
                    fields[k] = &c;
                }
            }
            const auto where = [&] { return "allowedip at byte " + std::to_string(el.start); };
            if (!fields[0]) throw ParseError(where() + ": missing <ip>");
            if (!fields[3]) throw ParseError(where() + ": missing <bw_up>");
            if (!fields[4]) throw ParseError(where() + ": missing <bw_down>");

            const auto content = [&](const xml::Element* e) {
                return src.substr(e->content_begin, e->content_end - e->content_begin);
            };
            AllowedIpEntry entry;
            const std::string ip_text(text::trim(xml::text_content(content(fields[0]))));
            auto ip = Ipv4::parse(ip_text);
            if (!ip) throw ParseError(where() + ": bad ip '" + ip_text + "'");
            entry.ip = *ip;
            if (fields[1]) {
                auto sn = abms::detail::parse_int<int>(text::trim(xml::text_content(content(fields[1]))));
                if (!sn || *sn < 0 || *sn > 32) throw ParseError(where() + ": bad <sn>");
                entry.sn = *sn;
            }
            if (fields[2]) entry.descr = xml::text_content(content(fields[2]));

            Slot slots[2];
            for (int k = 0; k < 2; ++k) {
                const xml::Element* e = fields[3 + k];
                if (!e->children.empty()) throw ParseError(where() + ": <" + e->name + "> has child elements");
                auto bw = abms::detail::parse_int<Kbps>(text::trim(content(e)));
                if (!bw || *bw == 0) throw ParseError(where() + ": <" + e->name + "> is not a positive integer");
                slots[k] = Slot{e->content_begin, e->content_end, *bw};
            }
            entry.bw_up = slots[0].original;
            entry.bw_down = slots[1].original;

            if (!doc.by_ip_.emplace(entry.ip, doc.entries_.size()).second)
                throw ParseError(where() + ": duplicate ip " + entry.ip.to_string());
            doc.entries_.push_back(std::move(entry));
            doc.slots_.push_back({slots[0], slots[1]});
        }
        return doc;
    }

    const std::vector<AllowedIpEntry>& entries() const { return entries_; }
    const std::string& original() const { return original_; }

    const AllowedIpEntry* find(Ipv4 ip) const {
        auto it = by_ip_.find(ip);
        return it == by_ip_.end() ? nullptr : &entries_[it->second];
    }

    /// bw_down of the entry for `ip`.
    std::optional<Kbps> current_bandwidth(Ipv4 ip) const {
        const auto* e = find(ip);
        return e ? std::optional<Kbps>(e->bw_down) : std::nullopt;
    }

    /// Sets both bw_up and bw_down of the entry for `ip` to `bw`.
    ApplyOutcome apply_bandwidth(Ipv4 ip, Kbps bw) {
        auto it = by_ip_.find(ip);
        if (it == by_ip_.end()) return NoChange::ip_unknown;
        AllowedIpEntry& e = entries_[it->second];
        if (e.bw_down == bw) return NoChange::unchanged;
        BandwidthChange change{ip, e.bw_down, bw, bw > e.bw_down ? Direction::increased : Direction::decreased};
        e.bw_up = bw;
        e.bw_down = bw;
        return change;
    }

    bool modified() const {
        for (std::size_t i = 0; i < entries_.size(); ++i)
            if (entries_[i].bw_up != slots_[i].up.original || entries_[i].bw_down != slots_[i].down.original) return true;
        return false;
    }

    /// Original bytes with the text of changed bandwidth elements replaced.
    std::string serialize() const {
        std::vector<std::pair<const Slot*, Kbps>> edits;
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            if (entries_[i].bw_up != slots_[i].up.original) edits.emplace_back(&slots_[i].up, entries_[i].bw_up);
            if (entries_[i].bw_down != slots_[i].down.original) edits.emplace_back(&slots_[i].down, entries_[i].bw_down);
        }
        std::sort(edits.begin(), edits.end(), [](const auto& a, const auto& b) { return a.first->begin < b.first->begin; });

        std::string out;
        out.reserve(original_.size() + 16);
        std::size_t cursor = 0;
        for (const auto& [slot, value] : edits) {
            out.append(original_, cursor, slot->begin - cursor);
            out += std::to_string(value);
            cursor = slot->end;
        }
        out.append(original_, cursor);
        return out;
    }

private:
    struct Slot {
        std::size_t begin = 0;
        std::size_t end = 0;
        Kbps original = 0;
    };
    struct Slots {
        Slot up;
        Slot down;
    };

    std::string original_;
    std::vector<AllowedIpEntry> entries_;
    std::vector<Slots> slots_;
    std::unordered_map<Ipv4, std::size_t> by_ip_;
};

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    if (in.bad()) throw IoError("read failed on " + path.string());
    return bytes;
}

inline ConfigDocument load_config(const std::filesystem::path& path) { return ConfigDocument::parse(read_file(path)); }

/// Writes `bytes` to a temporary file beside `path`, syncs it and renames it
/// over `path`. On failure the original file is left as it was.
inline void atomic_write(const std::filesystem::path& path, std::string_view bytes) {
    const auto dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
    std::string tmpl = (dir / ("." + path.filename().string() + ".tmpXXXXXX")).string();
    const int fd = ::mkstemp(tmpl.data());
    if (fd < 0) throw IoError("cannot create temporary file in " + dir.string() + ": " + std::strerror(errno));

    const auto fail = [&](const char* what) {
        const std::string msg = std::string(what) + " " + tmpl + ": " + std::strerror(errno);
        ::close(fd);
        ::unlink(tmpl.c_str());
        throw IoError(msg);
    };
    std::size_t written = 0;
    while (written < bytes.size()) {
        const auto n = ::write(fd, bytes.data() + written, bytes.size() - written);
        if (n < 0) {
            if (errno == EINTR) continue;
            fail("write failed on");
        }
        written += static_cast<std::size_t>(n);
    }
    struct stat st{};
    if (::stat(path.c_str(), &st) == 0) ::fchmod(fd, st.st_mode & 07777);
    if (::fsync(fd) != 0) fail("fsync failed on");
    if (::close(fd) != 0) {
        ::unlink(tmpl.c_str());
        throw IoError("close failed on " + tmpl);
    }
    if (::rename(tmpl.c_str(), path.c_str()) != 0) {
        const std::string msg = "cannot replace " + path.string() + ": " + std::strerror(errno);
        ::unlink(tmpl.c_str());
        throw IoError(msg);
    }
}

inline void write_config(const ConfigDocument& doc, const std::filesystem::path& path) {
    atomic_write(path, doc.serialize());
}

namespace detail {

// "<stamp>" or "<stamp>-<n>" after the ".bak." marker; nullopt for foreign files.
inline std::optional<std::pair<std::string, unsigned>> backup_key(std::string_view suffix) {
    if (suffix.size() < 14) return std::nullopt;
    const std::string_view stamp = suffix.substr(0, 14);
    if (!std::all_of(stamp.begin(), stamp.end(), [](char c) { return c >= '0' && c <= '9'; })) return std::nullopt;
    unsigned n = 0;
    if (suffix.size() > 14) {
        if (suffix[14] != '-') return std::nullopt;
        auto parsed = parse_int<unsigned>(suffix.substr(15));
        if (!parsed) return std::nullopt;
        n = *parsed;
    }
    return std::pair{std::string(stamp), n};
}

} // namespace detail

/// Copies `path` to "<path>.bak.YYYYMMDDhhmmss" (UTC), appending "-1", "-2"...
/// when that name is taken, then deletes the oldest backups so at most
/// `keep` remain (keep == 0 disables pruning). Returns the new backup path.
inline std::filesystem::path backup_config(const std::filesystem::path& path, UtcTime now, std::size_t keep = 10) {
    namespace fs = std::filesystem;
    using namespace std::chrono;
    const auto day = floor<days>(now);
    const year_month_day ymd{day};
    const hh_mm_ss hms{now - day};
    char stamp[32];
    std::snprintf(stamp, sizeof stamp, "%04d%02u%02u%02ld%02ld%02ld", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<long>(hms.hours().count()), static_cast<long>(hms.minutes().count()),
                  static_cast<long>(hms.seconds().count()));

    const std::string base = path.string() + ".bak." + stamp;
    fs::path target = base;
    std::error_code ec;
    for (unsigned n = 1;; ++n) {
        if (fs::copy_file(path, target, fs::copy_options::none, ec)) break;
        if (!fs::exists(target)) throw IoError("cannot back up " + path.string() + ": " + ec.message());
        target = base + "-" + std::to_string(n);
    }

    if (keep > 0) {
        const auto dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
        const std::string prefix = path.filename().string() + ".bak.";
        std::vector<std::pair<std::pair<std::string, unsigned>, fs::path>> backups;
        for (const auto& entry : fs::directory_iterator(dir, ec)) {
            const std::string name = entry.path().filename().string();
            if (!name.starts_with(prefix)) continue;
            if (auto key = detail::backup_key(std::string_view(name).substr(prefix.size())))
                backups.emplace_back(std::move(*key), entry.path());
        }
        std::sort(backups.begin(), backups.end());
        for (std::size_t i = 0; i + keep < backups.size(); ++i) fs::remove(backups[i].second, ec);
    }
    return target;
}

/// A minimal firewall document with one allowedip per entry, laid out like
/// the captive-portal section of a real configuration.
inline std::string render_allowedip_config(const std::vector<AllowedIpEntry>& entries) {
    std::ostringstream out;
    out << "<?xml version=\"1.0\"?>\n<pfsense>\n\t<captiveportal>\n\t\t<campus>\n";
    for (const auto& e : entries) {
        std::string descr = e.descr;
        for (auto at = descr.find("]]>"); at != std::string::npos; at = descr.find("]]>", at + 15))
            descr.replace(at, 3, "]]]]><![CDATA[>");
        out << "\t\t\t<allowedip>\n"
            << "\t\t\t\t<ip>" << e.ip << "</ip>\n"
            << "\t\t\t\t<sn>" << e.sn.value_or(32) << "</sn>\n"
            << "\t\t\t\t<descr><![CDATA[" << descr << "]]></descr>\n"
            << "\t\t\t\t<bw_up>" << e.bw_up << "</bw_up>\n"
            << "\t\t\t\t<bw_down>" << e.bw_down << "</bw_down>\n"
            << "\t\t\t</allowedip>\n";
    }
    out << "\t\t</campus>\n\t</captiveportal>\n</pfsense>\n";
    return out.str();
}

} // namespace abms
