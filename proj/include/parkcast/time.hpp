#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace parkcast {

inline constexpr std::int64_t kMinutesPerDay = 1440;
inline constexpr std::int64_t kMinutesPerWeek = 7 * kMinutesPerDay;

/// Minutes since 1970-01-01T00:00Z.
struct Timestamp {
    std::int64_t minutes = 0;

    constexpr Timestamp() = default;
    constexpr explicit Timestamp(std::int64_t m) : minutes(m) {}

    constexpr auto operator<=>(const Timestamp&) const = default;

    constexpr Timestamp operator+(std::int64_t m) const { return Timestamp{minutes + m}; }
    constexpr Timestamp operator-(std::int64_t m) const { return Timestamp{minutes - m}; }
    constexpr std::int64_t operator-(Timestamp other) const { return minutes - other.minutes; }
};

/// Parses `YYYY-MM-DDTHH:MM[:SS][Z]`; a space may replace the `T`. Seconds,
/// when present, must be zero.
std::optional<Timestamp> parse_iso8601(std::string_view text);
/// Formats as `YYYY-MM-DDTHH:MMZ`.
std::string format_iso8601(Timestamp t);

/// Parses `YYYY-MM-DD` to the day index since the epoch.
std::optional<std::int64_t> parse_date(std::string_view text);
std::string format_date(std::int64_t day_index);

Timestamp from_civil(int year, unsigned month, unsigned day, int hour = 0, int minute = 0);

constexpr std::int64_t day_index(Timestamp t)
{
    return t.minutes >= 0 ? t.minutes / kMinutesPerDay : -((-t.minutes + kMinutesPerDay - 1) / kMinutesPerDay);
}

constexpr int minute_of_day(Timestamp t)
{
    return static_cast<int>(t.minutes - day_index(t) * kMinutesPerDay);
}

/// Monday = 0 ... Sunday = 6. 1970-01-01 was a Thursday.
constexpr int weekday(Timestamp t)
{
    const std::int64_t d = day_index(t) + 3;
    return static_cast<int>(((d % 7) + 7) % 7);
}

/// Contiguous one-minute grid [start, start + length).
struct MinuteGrid {
    Timestamp start;
    std::int64_t length = 0;

    Timestamp at(std::int64_t index) const { return start + index; }
    Timestamp end() const { return start + length; }
    bool contains(Timestamp t) const { return t >= start && t < end(); }
    std::optional<std::int64_t> index_of(Timestamp t) const
    {
        if (!contains(t))
            return std::nullopt;
        return t - start;
    }
    bool operator==(const MinuteGrid&) const = default;
};

}  // namespace parkcast
