#pragma once

#include "parkcast/time.hpp"
#include "parkcast/util.hpp"

#include <span>

namespace parkcast {

/// Value of the target exactly `period` minutes before the predicted instant.
double naive_seasonal(const MinuteGrid& grid, std::span<const double> history, Timestamp t, int horizon,
                      std::int64_t period = kMinutesPerWeek);

/// Last observed value at or before t, whatever the horizon.
double naive_random_walk(const MinuteGrid& grid, std::span<const double> history, Timestamp t, int horizon);

/// Seasonal random walk over a fixed target history.
class SeasonalNaive {
public:
    SeasonalNaive(MinuteGrid grid, Series history, std::int64_t period = kMinutesPerWeek)
        : grid_(grid), history_(std::move(history)), period_(period)
    {
    }

    double predict(Timestamp t, int horizon) const { return naive_seasonal(grid_, history_, t, horizon, period_); }
    const Series& history() const { return history_; }
    const MinuteGrid& grid() const { return grid_; }

private:
    MinuteGrid grid_;
    Series history_;
    std::int64_t period_;
};

}  // namespace parkcast
