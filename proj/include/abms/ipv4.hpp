#pragma once

#include <charconv>
#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>

namespace abms {

/// IPv4 address held in host byte order. Only dotted-quad text is accepted.
class Ipv4 {
public:
    constexpr Ipv4() = default;
    constexpr explicit Ipv4(std::uint32_t value) : value_(value) {}

    static std::optional<Ipv4> parse(std::string_view text) {
        std::uint32_t value = 0;
        const char* p = text.data();
        const char* end = text.data() + text.size();
        for (int octet = 0; octet < 4; ++octet) {
            if (octet > 0) {
                if (p == end || *p != '.') return std::nullopt;
                ++p;
            }
            const char* digits = p;
            while (p != end && *p >= '0' && *p <= '9') ++p;
            const auto width = p - digits;
            if (width < 1 || width > 3) return std::nullopt;
            unsigned part = 0;
            std::from_chars(digits, p, part);
            if (part > 255) return std::nullopt;
            value = (value << 8) | part;
        }
        if (p != end) return std::nullopt;
        return Ipv4{value};
    }

    constexpr std::uint32_t value() const { return value_; }

    std::string to_string() const {
        std::string out;
        out.reserve(15);
        for (int shift = 24; shift >= 0; shift -= 8) {
            if (shift != 24) out.push_back('.');
            out += std::to_string((value_ >> shift) & 0xffu);
        }
        return out;
    }

    friend constexpr auto operator<=>(Ipv4, Ipv4) = default;

    friend std::ostream& operator<<(std::ostream& os, Ipv4 ip) { return os << ip.to_string(); }

private:
    std::uint32_t value_ = 0;
};

} // namespace abms

template <>
struct std::hash<abms::Ipv4> {
    std::size_t operator()(abms::Ipv4 ip) const noexcept { return std::hash<std::uint32_t>{}(ip.value()); }
};
