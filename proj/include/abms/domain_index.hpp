#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "abms/errors.hpp"
#include "abms/text.hpp"

namespace abms {

enum class MatchMode {
    suffix,    ///< host equals an entry or ends with "." + entry
    substring, ///< host occurs anywhere in the raw list text
};

/// Normalizes one category-list line. Returns nullopt for lines that are not
/// a bare domain (contain whitespace or '/', or are empty after trimming).
inline std::optional<std::string> normalize_domain(std::string_view entry) {
    entry = text::trim(entry);
    while (!entry.empty() && entry.front() == '.') entry.remove_prefix(1);
    while (!entry.empty() && entry.back() == '.') entry.remove_suffix(1);
    if (entry.empty()) return std::nullopt;
    for (char c : entry)
        if (text::is_space(c) || c == '/') return std::nullopt;
    return text::lower(entry);
}

/// Immutable set of educational domains, queried by host.
class CategoryIndex {
public:
    CategoryIndex() = default;

    template <typename Range>
    static CategoryIndex from_entries(const Range& entries) {
        CategoryIndex index;
        for (const auto& e : entries) index.add_line(e);
        return index;
    }

    /// Newline-delimited domains; blank lines and '#' comments are skipped,
    /// malformed entries are counted in skipped_entries().
    static CategoryIndex load(const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot read category file " + path.string());
        CategoryIndex index;
        index.source_path_ = path;
        std::string line;
        while (std::getline(in, line)) index.add_line(line);
        if (in.bad()) throw IoError("read failed on " + path.string());
        return index;
    }

    bool contains(std::string_view domain) const { return domains_.find(domain) != domains_.end(); }

    bool matches_suffix(std::string_view host) const {
        if (contains(host)) return true;
        for (std::size_t dot = host.find('.'); dot != std::string_view::npos; dot = host.find('.', dot + 1))
            if (contains(host.substr(dot + 1))) return true;
        return false;
    }

    bool matches_substring(std::string_view host) const {
        return !host.empty() && raw_text_.find(host) != std::string::npos;
    }

    std::size_t entry_count() const { return domains_.size(); }
    std::size_t skipped_entries() const { return skipped_; }
    const std::filesystem::path& source_path() const { return source_path_; }

private:
    struct Hash {
        using is_transparent = void;
        std::size_t operator()(std::string_view s) const noexcept { return std::hash<std::string_view>{}(s); }
    };

    void add_line(std::string_view line) {
        const std::string_view t = text::trim(line);
        if (t.empty() || t.front() == '#') return;
        auto domain = normalize_domain(t);
        if (!domain) {
            ++skipped_;
            return;
        }
        if (domains_.insert(*domain).second) {
            raw_text_ += *domain;
            raw_text_ += '\n';
        }
    }

    std::unordered_set<std::string, Hash, std::equal_to<>> domains_;
    // Entries joined by newlines, in load order: the text substring mode searches.
    std::string raw_text_;
    std::filesystem::path source_path_;
    std::size_t skipped_ = 0;
};

inline bool is_educational(const CategoryIndex& index, std::string_view host, MatchMode mode = MatchMode::suffix) {
    return mode == MatchMode::suffix ? index.matches_suffix(host) : index.matches_substring(host);
}

} // namespace abms
