#include "parkcast/time.hpp"

#include <chrono>
#include <cstdio>

namespace parkcast {

namespace {

bool parse_fixed(std::string_view text, std::size_t pos, std::size_t len, int& out)
{
    if (pos + len > text.size())
        return false;
    int value = 0;
    for (std::size_t i = pos; i < pos + len; ++i) {
        const char c = text[i];
        if (c < '0' || c > '9')
            return false;
        value = value * 10 + (c - '0');
    }
    out = value;
    return true;
}

std::optional<std::int64_t> civil_days(int y, int m, int d)
{
    using namespace std::chrono;
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(m)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok())
        return std::nullopt;
    return sys_days{ymd}.time_since_epoch().count();
}

}  // namespace

Timestamp from_civil(int year, unsigned month, unsigned day, int hour, int minute)
{
    using namespace std::chrono;
    const auto days = sys_days{year_month_day{std::chrono::year{year}, std::chrono::month{month}, std::chrono::day{day}}};
    return Timestamp{days.time_since_epoch().count() * kMinutesPerDay + hour * 60 + minute};
}

std::optional<std::int64_t> parse_date(std::string_view text)
{
    int y = 0, m = 0, d = 0;
    if (text.size() < 10 || text[4] != '-' || text[7] != '-')
        return std::nullopt;
    if (!parse_fixed(text, 0, 4, y) || !parse_fixed(text, 5, 2, m) || !parse_fixed(text, 8, 2, d))
        return std::nullopt;
    if (text.size() != 10)
        return std::nullopt;
    return civil_days(y, m, d);
}

std::optional<Timestamp> parse_iso8601(std::string_view text)
{
    if (!text.empty() && text.back() == 'Z')
        text.remove_suffix(1);
    if (text.size() != 16 && text.size() != 19)
        return std::nullopt;
    if (text[10] != 'T' && text[10] != ' ')
        return std::nullopt;
    const auto days = parse_date(text.substr(0, 10));
    if (!days)
        return std::nullopt;
    int hh = 0, mm = 0;
    if (text[13] != ':' || !parse_fixed(text, 11, 2, hh) || !parse_fixed(text, 14, 2, mm))
        return std::nullopt;
    if (hh > 23 || mm > 59)
        return std::nullopt;
    if (text.size() == 19) {
        int ss = 0;
        if (text[16] != ':' || !parse_fixed(text, 17, 2, ss) || ss != 0)
            return std::nullopt;
    }
    return Timestamp{*days * kMinutesPerDay + hh * 60 + mm};
}

std::string format_date(std::int64_t day_index)
{
    using namespace std::chrono;
    const year_month_day ymd{sys_days{days{day_index}}};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

std::string format_iso8601(Timestamp t)
{
    const int mod = minute_of_day(t);
    char buf[16];
    std::snprintf(buf, sizeof buf, "T%02d:%02dZ", mod / 60, mod % 60);
    return format_date(day_index(t)) + buf;
}

}  // namespace parkcast
