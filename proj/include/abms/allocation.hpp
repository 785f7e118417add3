#pragma once

// Adaptive bandwidth arithmetic. A user's share moves between a floor
// (institution capacity split evenly across the expected users) and twice
// that floor, in proportion to the fraction of their page views that hit
// educational sites.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

#include "abms/errors.hpp"

namespace abms {

using Kbps = std::uint32_t;

/// floor(tbi / enu). Rejects zero users and sub-1-Kbps floors.
inline Kbps minimum_bandwidth(std::uint64_t tbi, std::uint64_t enu) {
    if (enu == 0) throw InvalidPolicy("estimated number of users must be positive");
    const std::uint64_t floor = tbi / enu;
    if (floor == 0)
        throw InvalidPolicy("total bandwidth " + std::to_string(tbi) + " Kbps gives a zero floor for " +
                            std::to_string(enu) + " users");
    if (floor > UINT32_MAX / 2) throw InvalidPolicy("minimum bandwidth out of range");
    return static_cast<Kbps>(floor);
}

/// bw_min * (1 + nes/tsa), rounded to the nearest Kbps with ties away from
/// zero. tsa == 0 yields bw_min. Exact: no floating point is involved.
inline Kbps compute_allocation(Kbps bw_min, std::uint64_t nes, std::uint64_t tsa) {
    if (nes > tsa) throw std::domain_error("educational views exceed total views");
    if (tsa == 0) return bw_min;
    using u128 = unsigned __int128;
    const u128 twice_num = 2 * static_cast<u128>(nes) * bw_min;
    const u128 den = 2 * static_cast<u128>(tsa);
    const auto bonus = static_cast<Kbps>((twice_num + tsa) / den);
    return bw_min + bonus;
}

/// Floor bandwidth plus, when known, the capacity figures it was derived from.
struct AllocationPolicy {
    Kbps bw_min = 0;
    std::optional<std::uint64_t> tbi;
    std::optional<std::uint64_t> enu;

    static AllocationPolicy fixed(Kbps bw_min) {
        if (bw_min < 1) throw InvalidPolicy("minimum bandwidth must be at least 1 Kbps");
        if (bw_min > UINT32_MAX / 2) throw InvalidPolicy("minimum bandwidth out of range");
        return {bw_min, std::nullopt, std::nullopt};
    }

    static AllocationPolicy from_capacity(std::uint64_t tbi, std::uint64_t enu) {
        return {minimum_bandwidth(tbi, enu), tbi, enu};
    }

    Kbps ceiling() const { return 2 * bw_min; }
    bool within_bounds(Kbps bw) const { return bw >= bw_min && bw <= ceiling(); }
    Kbps allocate(std::uint64_t nes, std::uint64_t tsa) const { return compute_allocation(bw_min, nes, tsa); }
};

} // namespace abms
