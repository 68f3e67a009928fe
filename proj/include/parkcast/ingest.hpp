#pragma once

#include "parkcast/datamodel.hpp"
#include "parkcast/time.hpp"

#include <json.hpp>

#include <filesystem>
#include <set>
#include <string>
#include <vector>

namespace parkcast {

struct TransactionRecord {
    std::string garage_id;
    Timestamp entry_time;
    Timestamp exit_time;

    auto operator<=>(const TransactionRecord&) const = default;
};

struct TrafficObservation {
    std::string location_id;
    Timestamp time;
    double flow = 0.0;  // veh/h

    auto operator<=>(const TrafficObservation&) const = default;
};

struct WeatherObservation {
    Timestamp time;
    double temperature = 0.0;  // 0.1 degC
    int rain = 0;

    auto operator<=>(const WeatherObservation&) const = default;
};

struct RejectedRow {
    std::size_t line = 0;  // 1-based, header is line 1
    std::string content;
    std::string reason;
};

template <typename Record>
struct ParseResult {
    std::vector<Record> records;
    std::vector<RejectedRow> rejects;
};

ParseResult<TransactionRecord> parse_transactions_csv(const std::filesystem::path& path);
ParseResult<TrafficObservation> parse_traffic_csv(const std::filesystem::path& path);
ParseResult<WeatherObservation> parse_weather_csv(const std::filesystem::path& path);

void write_transactions_csv(const std::filesystem::path& path, const std::vector<TransactionRecord>& records);
void write_traffic_csv(const std::filesystem::path& path, const std::vector<TrafficObservation>& records);
void write_weather_csv(const std::filesystem::path& path, const std::vector<WeatherObservation>& records);
void write_rejects_csv(const std::filesystem::path& path, const std::vector<RejectedRow>& rejects);

/// Static national-holiday calendar keyed by day index.
struct HolidayCalendar {
    std::set<std::int64_t> days;

    bool is_holiday(Timestamp t) const { return days.contains(day_index(t)); }
};

/// `date,is_holiday`; rows with is_holiday == 0 are accepted and ignored.
ParseResult<std::int64_t> parse_holidays_csv(const std::filesystem::path& path);
void write_holidays_csv(const std::filesystem::path& path, const HolidayCalendar& calendar);

struct EventDay {
    int day = 0;
    double intensity = 0.0;
};

struct WeatherProcess {
    double mean_temperature = 100.0;      // 0.1 degC
    double daily_amplitude = 50.0;
    double noise_sd = 5.0;                // AR(1) innovation, 0.1 degC
    double rain_start_probability = 0.01; // per 10-minute step
    double rain_stop_probability = 0.08;
    double rain_arrival_effect = 0.15;    // relative change in arrivals while raining
};

struct SyntheticCityConfig {
    std::uint64_t seed = 1;
    int days = 90;
    int capacity = 800;
    std::string garage_id = "centraal";
    Timestamp start = from_civil(2019, 1, 7);  // a Monday
    std::vector<double> daily_profile;         // 24 base arrival rates, vehicles/minute
    std::vector<double> weekly_multipliers;    // Monday first
    std::vector<EventDay> event_days;
    int event_start_hour = 18;
    int event_end_hour = 22;
    double noise_level = 0.1;                  // sd of the per-day log intensity factor
    WeatherProcess weather;
    std::vector<int> holiday_days;
    double holiday_multiplier = 0.5;
    double stay_median_minutes = 150.0;
    double stay_sigma = 0.6;
    int locations = 11;
    double flow_coupling = 60.0;   // veh/h per garage movement per minute
    double ambient_flow = 400.0;   // veh/h peak ambient flow
    double flow_noise_sd = 40.0;   // veh/h
    double missing_rate = 0.0;     // probability of dropping a traffic/weather observation

    static SyntheticCityConfig defaults();
    void validate() const;
};

void to_json(nlohmann::json& j, const SyntheticCityConfig& c);
void from_json(const nlohmann::json& j, SyntheticCityConfig& c);

struct SyntheticCity {
    MinuteGrid grid;
    std::vector<std::string> location_ids;
    std::vector<TransactionRecord> transactions;
    std::vector<TrafficObservation> traffic;
    std::vector<WeatherObservation> weather;
    HolidayCalendar holidays;
    GarageStateSeries ground_truth;
    std::size_t rejected_arrivals = 0;
};

SyntheticCity generate_synthetic_city(const SyntheticCityConfig& config);

std::vector<Stay> to_stays(const std::vector<TransactionRecord>& records);

/// Minute-grid exogenous series from raw observations.
ExogenousSeries build_exogenous(const std::vector<TrafficObservation>& traffic,
                                const std::vector<WeatherObservation>& weather, const HolidayCalendar& holidays,
                                const MinuteGrid& grid);

}  // namespace parkcast
