#include "parkcast/datamodel.hpp"

#include "parkcast/error.hpp"

#include <algorithm>
#include <cmath>

namespace parkcast {

std::vector<std::int64_t> GarageStateSeries::occupancy_counts() const
{
    std::vector<std::int64_t> counts(occupancy_rate.size());
    for (std::size_t i = 0; i < counts.size(); ++i)
        counts[i] = std::llround(occupancy_rate[i] * capacity);
    return counts;
}

std::size_t Dataset::valid_rows() const
{
    return static_cast<std::size_t>(std::count(row_mask.begin(), row_mask.end(), std::uint8_t{1}));
}

double Dataset::deletion_fraction() const
{
    if (row_mask.empty())
        return 0.0;
    return static_cast<double>(row_mask.size() - valid_rows()) / static_cast<double>(row_mask.size());
}

void SplitSpec::validate() const
{
    if (train_fraction <= 0 || validation_fraction < 0 || test_fraction <= 0)
        fail(ErrorCode::InvalidConfig, "split fractions must be positive");
    if (std::abs(train_fraction + validation_fraction + test_fraction - 1.0) > 1e-9)
        fail(ErrorCode::InvalidConfig, "split fractions must sum to 1");
}

GarageStateSeries derive_states_from_transactions(std::span<const Stay> stays, int capacity, int initial_occupancy,
                                                  const MinuteGrid& grid, std::string garage_id)
{
    if (grid.length <= 0)
        fail(ErrorCode::EmptyGrid, "grid has zero minutes");
    if (capacity <= 0)
        fail(ErrorCode::InvalidConfig, "capacity must be positive");
    if (initial_occupancy < 0 || initial_occupancy > capacity)
        fail(ErrorCode::OccupancyOutOfBounds, "initial occupancy outside [0, capacity]");

    const auto n = static_cast<std::size_t>(grid.length);
    std::vector<std::int64_t> in(n, 0), out(n, 0);
    std::int64_t start_count = initial_occupancy;
    for (const auto& s : stays) {
        if (s.exit < s.entry)
            fail(ErrorCode::InvalidConfig, "stay exits before it enters at " + format_iso8601(s.entry));
        if (s.entry < grid.start)
            ++start_count;
        else if (s.entry < grid.end())
            ++in[static_cast<std::size_t>(s.entry - grid.start)];
        if (s.exit < grid.start)
            --start_count;
        else if (s.exit < grid.end())
            ++out[static_cast<std::size_t>(s.exit - grid.start)];
    }

    GarageStateSeries g;
    g.garage_id = std::move(garage_id);
    g.capacity = capacity;
    g.grid = grid;
    g.occupancy_rate.resize(n);
    g.influx.resize(n);
    g.outflux.resize(n);
    std::int64_t count = start_count;
    for (std::size_t t = 0; t < n; ++t) {
        count += in[t] - out[t];
        if (count < 0 || count > capacity)
            fail(ErrorCode::OccupancyOutOfBounds,
                 "derived occupancy " + std::to_string(count) + " at " + format_iso8601(grid.at(static_cast<std::int64_t>(t))));
        g.occupancy_rate[t] = static_cast<double>(count) / capacity;
        g.influx[t] = static_cast<double>(in[t]);
        g.outflux[t] = static_cast<double>(out[t]);
    }
    return g;
}

namespace {

Series align(const Series& s, const MinuteGrid& from, const MinuteGrid& to, const char* name)
{
    if (s.size() != static_cast<std::size_t>(from.length))
        fail(ErrorCode::GridMismatch, std::string(name) + " length does not match its grid");
    if (to.start < from.start || to.end() > from.end())
        fail(ErrorCode::GridMismatch, std::string(name) + " does not cover the dataset grid");
    const auto offset = static_cast<std::size_t>(to.start - from.start);
    return Series(s.begin() + static_cast<std::ptrdiff_t>(offset),
                  s.begin() + static_cast<std::ptrdiff_t>(offset + static_cast<std::size_t>(to.length)));
}

}  // namespace

Dataset assemble_dataset(const GarageStateSeries& garage, const ExogenousSeries& exogenous, const MinuteGrid& grid)
{
    if (grid.length <= 0)
        fail(ErrorCode::EmptyGrid, "grid has zero minutes");
    if (exogenous.location_ids.size() != exogenous.traffic_flow.size())
        fail(ErrorCode::GridMismatch, "traffic locations and series disagree");

    Dataset d;
    d.grid = grid;
    d.garage.garage_id = garage.garage_id;
    d.garage.capacity = garage.capacity;
    d.garage.grid = grid;
    d.garage.occupancy_rate = align(garage.occupancy_rate, garage.grid, grid, "occupancy_rate");
    d.garage.influx = align(garage.influx, garage.grid, grid, "influx");
    d.garage.outflux = align(garage.outflux, garage.grid, grid, "outflux");

    d.exogenous.grid = grid;
    d.exogenous.location_ids = exogenous.location_ids;
    for (const auto& flow : exogenous.traffic_flow)
        d.exogenous.traffic_flow.push_back(align(flow, exogenous.grid, grid, "traffic_flow"));
    d.exogenous.temperature = align(exogenous.temperature, exogenous.grid, grid, "temperature");
    d.exogenous.rain = align(exogenous.rain, exogenous.grid, grid, "rain");
    d.exogenous.holiday = align(exogenous.holiday, exogenous.grid, grid, "holiday");

    const auto n = static_cast<std::size_t>(grid.length);
    d.row_mask.assign(n, 1);
    auto mark = [&](const Series& s) {
        for (std::size_t t = 0; t < n; ++t)
            if (is_missing(s[t]))
                d.row_mask[t] = 0;
    };
    mark(d.garage.occupancy_rate);
    mark(d.garage.influx);
    mark(d.garage.outflux);
    for (const auto& flow : d.exogenous.traffic_flow)
        mark(flow);
    mark(d.exogenous.temperature);
    mark(d.exogenous.rain);
    mark(d.exogenous.holiday);
    return d;
}

Split chronological_split(std::span<const std::int64_t> ordered_rows, const SplitSpec& spec)
{
    spec.validate();
    const std::size_t n = ordered_rows.size();
    if (n < 3)
        fail(ErrorCode::TooFewRows, "need at least 3 valid rows to split, have " + std::to_string(n));
    // The tiny epsilon keeps e.g. 0.72 * 100 from flooring to 71.
    auto n_train = static_cast<std::size_t>(std::floor(spec.train_fraction * static_cast<double>(n) + 1e-9));
    auto n_val = static_cast<std::size_t>(std::floor(spec.validation_fraction * static_cast<double>(n) + 1e-9));
    n_train = std::max<std::size_t>(n_train, 1);
    if (n_train + n_val >= n)
        n_val = n - n_train - 1;

    Split s;
    s.train.assign(ordered_rows.begin(), ordered_rows.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.validation.assign(ordered_rows.begin() + static_cast<std::ptrdiff_t>(n_train),
                        ordered_rows.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    s.test.assign(ordered_rows.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), ordered_rows.end());
    return s;
}

Split chronological_split(const Dataset& dataset, const SplitSpec& spec)
{
    std::vector<std::int64_t> rows;
    rows.reserve(dataset.row_mask.size());
    for (std::size_t t = 0; t < dataset.row_mask.size(); ++t)
        if (dataset.row_mask[t])
            rows.push_back(static_cast<std::int64_t>(t));
    return chronological_split(rows, spec);
}

}  // namespace parkcast
