#pragma once

#include "parkcast/time.hpp"
#include "parkcast/util.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace parkcast {

/// Occupancy is stored as a rate in [0, 1]; counts are per minute.
struct GarageStateSeries {
    std::string garage_id;
    int capacity = 0;
    MinuteGrid grid;
    Series occupancy_rate;
    Series influx;
    Series outflux;

    /// Occupied spaces per minute, recovered from the stored rate.
    std::vector<std::int64_t> occupancy_counts() const;
};

struct ExogenousSeries {
    MinuteGrid grid;
    std::vector<std::string> location_ids;
    std::vector<Series> traffic_flow;  // veh/h, one series per location
    Series temperature;                // 0.1 degC
    Series rain;                       // {0, 1}
    Series holiday;                    // {0, 1}
};

struct Dataset {
    MinuteGrid grid;
    GarageStateSeries garage;
    ExogenousSeries exogenous;
    std::vector<std::uint8_t> row_mask;

    std::size_t valid_rows() const;
    double deletion_fraction() const;
};

struct SplitSpec {
    double train_fraction = 0.72;
    double validation_fraction = 0.08;
    double test_fraction = 0.20;

    void validate() const;
};

/// Chronological partition of row indices (grid offsets).
struct Split {
    std::vector<std::int64_t> train;
    std::vector<std::int64_t> validation;
    std::vector<std::int64_t> test;
};

/// A stay in the garage; times are the minutes of entry and exit.
struct Stay {
    Timestamp entry;
    Timestamp exit;
};

/// Influx/outflux count the entries/exits falling in each grid minute. The
/// occupancy at minute t is the state after that minute's events:
/// initial + entries(<= t) - exits(<= t). Events before the grid shift the
/// starting state; events after the grid are ignored.
GarageStateSeries derive_states_from_transactions(std::span<const Stay> stays, int capacity, int initial_occupancy,
                                                  const MinuteGrid& grid, std::string garage_id = {});

/// Aligns all series onto `grid` and marks rows with any missing variable invalid.
Dataset assemble_dataset(const GarageStateSeries& garage, const ExogenousSeries& exogenous, const MinuteGrid& grid);

/// Splits the valid rows of `dataset`. Train and validation sizes are floored,
/// the remainder goes to test.
Split chronological_split(const Dataset& dataset, const SplitSpec& spec);
Split chronological_split(std::span<const std::int64_t> ordered_rows, const SplitSpec& spec);

}  // namespace parkcast
