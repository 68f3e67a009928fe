#include "parkcast/naive.hpp"

#include "parkcast/error.hpp"

namespace parkcast {

double naive_seasonal(const MinuteGrid& grid, std::span<const double> history, Timestamp t, int horizon,
                      std::int64_t period)
{
    const Timestamp source = t + horizon - period;
    const auto index = grid.index_of(source);
    if (!index || static_cast<std::size_t>(*index) >= history.size() || is_missing(history[static_cast<std::size_t>(*index)]))
        fail(ErrorCode::InsufficientHistory, "no observation at " + format_iso8601(source) + " for the seasonal naive");
    return history[static_cast<std::size_t>(*index)];
}

double naive_random_walk(const MinuteGrid& grid, std::span<const double> history, Timestamp t, int /*horizon*/)
{
    if (t < grid.start)
        fail(ErrorCode::InsufficientHistory, "no observation at or before " + format_iso8601(t));
    auto i = std::min<std::int64_t>(t - grid.start, static_cast<std::int64_t>(history.size()) - 1);
    for (; i >= 0; --i)
        if (!is_missing(history[static_cast<std::size_t>(i)]))
            return history[static_cast<std::size_t>(i)];
    fail(ErrorCode::InsufficientHistory, "no observation at or before " + format_iso8601(t));
}

}  // namespace parkcast
