#include "parkcast/ingest.hpp"

#include "parkcast/error.hpp"
#include "parkcast/signal.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

namespace parkcast {

namespace {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::pair<std::size_t, std::string>> lines;  // (line number, raw text)
};

CsvTable read_csv(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        fail(ErrorCode::FileUnreadable, "cannot open " + path.string());
    CsvTable table;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (trim(line).empty())
            continue;
        if (table.header.empty()) {
            for (auto f : split_csv_line(line))
                table.header.emplace_back(f);
            continue;
        }
        table.lines.emplace_back(number, line);
    }
    if (table.header.empty())
        fail(ErrorCode::SchemaMismatch, path.string() + " has no header row");
    return table;
}

std::vector<std::size_t> require_columns(const CsvTable& table, std::initializer_list<std::string_view> names,
                                         const std::filesystem::path& path)
{
    std::vector<std::size_t> idx;
    for (auto name : names) {
        auto it = std::find(table.header.begin(), table.header.end(), name);
        if (it == table.header.end())
            fail(ErrorCode::SchemaMismatch, path.string() + " is missing column '" + std::string(name) + "'");
        idx.push_back(static_cast<std::size_t>(it - table.header.begin()));
    }
    return idx;
}

std::optional<double> parse_number(std::string_view s)
{
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v))
        return std::nullopt;
    return v;
}

template <typename Record, typename RowFn>
ParseResult<Record> parse_rows(const CsvTable& table, std::size_t min_fields, RowFn&& parse_row)
{
    ParseResult<Record> result;
    for (const auto& [number, text] : table.lines) {
        const auto fields = split_csv_line(text);
        if (fields.size() < min_fields || fields.size() != table.header.size()) {
            result.rejects.push_back({number, text, "expected " + std::to_string(table.header.size()) + " fields"});
            continue;
        }
        std::string reason;
        auto record = parse_row(fields, reason);
        if (record)
            result.records.push_back(std::move(*record));
        else
            result.rejects.push_back({number, text, reason});
    }
    return result;
}

std::ofstream open_for_write(const std::filesystem::path& path)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out)
        fail(ErrorCode::IoError, "cannot write " + path.string());
    return out;
}

}  // namespace

ParseResult<TransactionRecord> parse_transactions_csv(const std::filesystem::path& path)
{
    const auto table = read_csv(path);
    const auto col = require_columns(table, {"garage_id", "entry_time", "exit_time"}, path);
    const auto width = *std::max_element(col.begin(), col.end()) + 1;
    return parse_rows<TransactionRecord>(table, width, [&](const auto& f, std::string& reason) -> std::optional<TransactionRecord> {
        const auto entry = parse_iso8601(f[col[1]]);
        const auto exit = parse_iso8601(f[col[2]]);
        if (f[col[0]].empty()) {
            reason = "empty garage_id";
            return std::nullopt;
        }
        if (!entry || !exit) {
            reason = "unparseable timestamp";
            return std::nullopt;
        }
        if (*exit < *entry) {
            reason = "exit before entry";
            return std::nullopt;
        }
        return TransactionRecord{std::string(f[col[0]]), *entry, *exit};
    });
}

ParseResult<TrafficObservation> parse_traffic_csv(const std::filesystem::path& path)
{
    const auto table = read_csv(path);
    const auto col = require_columns(table, {"location_id", "time", "flow_veh_per_hour"}, path);
    const auto width = *std::max_element(col.begin(), col.end()) + 1;
    return parse_rows<TrafficObservation>(table, width, [&](const auto& f, std::string& reason) -> std::optional<TrafficObservation> {
        const auto t = parse_iso8601(f[col[1]]);
        const auto flow = parse_number(f[col[2]]);
        if (f[col[0]].empty()) {
            reason = "empty location_id";
            return std::nullopt;
        }
        if (!t) {
            reason = "unparseable timestamp";
            return std::nullopt;
        }
        if (!flow) {
            reason = "flow is not a finite number";
            return std::nullopt;
        }
        if (*flow < 0) {
            reason = "negative flow";
            return std::nullopt;
        }
        return TrafficObservation{std::string(f[col[0]]), *t, *flow};
    });
}

ParseResult<WeatherObservation> parse_weather_csv(const std::filesystem::path& path)
{
    const auto table = read_csv(path);
    const auto col = require_columns(table, {"time", "temperature_tenth_celsius", "rain_binary"}, path);
    const auto width = *std::max_element(col.begin(), col.end()) + 1;
    return parse_rows<WeatherObservation>(table, width, [&](const auto& f, std::string& reason) -> std::optional<WeatherObservation> {
        const auto t = parse_iso8601(f[col[0]]);
        const auto temp = parse_number(f[col[1]]);
        const auto rain = parse_number(f[col[2]]);
        if (!t) {
            reason = "unparseable timestamp";
            return std::nullopt;
        }
        if (!temp) {
            reason = "temperature is not a finite number";
            return std::nullopt;
        }
        if (!rain || (*rain != 0.0 && *rain != 1.0)) {
            reason = "rain must be 0 or 1";
            return std::nullopt;
        }
        return WeatherObservation{*t, *temp, static_cast<int>(*rain)};
    });
}

ParseResult<std::int64_t> parse_holidays_csv(const std::filesystem::path& path)
{
    const auto table = read_csv(path);
    const auto col = require_columns(table, {"date", "is_holiday"}, path);
    const auto width = *std::max_element(col.begin(), col.end()) + 1;
    ParseResult<std::int64_t> all = parse_rows<std::int64_t>(table, width, [&](const auto& f, std::string& reason) -> std::optional<std::int64_t> {
        const auto day = parse_date(f[col[0]]);
        const auto flag = parse_number(f[col[1]]);
        if (!day) {
            reason = "unparseable date";
            return std::nullopt;
        }
        if (!flag || (*flag != 0.0 && *flag != 1.0)) {
            reason = "is_holiday must be 0 or 1";
            return std::nullopt;
        }
        // Non-holidays are encoded as a negative sentinel and filtered below.
        return *flag == 1.0 ? *day : -1 - *day;
    });
    std::erase_if(all.records, [](std::int64_t d) { return d < 0; });
    return all;
}

void write_transactions_csv(const std::filesystem::path& path, const std::vector<TransactionRecord>& records)
{
    auto out = open_for_write(path);
    out << "garage_id,entry_time,exit_time\n";
    for (const auto& r : records)
        out << r.garage_id << ',' << format_iso8601(r.entry_time) << ',' << format_iso8601(r.exit_time) << '\n';
}

void write_traffic_csv(const std::filesystem::path& path, const std::vector<TrafficObservation>& records)
{
    auto out = open_for_write(path);
    out << "location_id,time,flow_veh_per_hour\n";
    for (const auto& r : records)
        out << r.location_id << ',' << format_iso8601(r.time) << ',' << format_double(r.flow) << '\n';
}

void write_weather_csv(const std::filesystem::path& path, const std::vector<WeatherObservation>& records)
{
    auto out = open_for_write(path);
    out << "time,temperature_tenth_celsius,rain_binary\n";
    for (const auto& r : records)
        out << format_iso8601(r.time) << ',' << format_double(r.temperature) << ',' << r.rain << '\n';
}

void write_rejects_csv(const std::filesystem::path& path, const std::vector<RejectedRow>& rejects)
{
    auto out = open_for_write(path);
    out << "line,reason,content\n";
    for (const auto& r : rejects)
        out << r.line << ',' << r.reason << ",\"" << r.content << "\"\n";
}

void write_holidays_csv(const std::filesystem::path& path, const HolidayCalendar& calendar)
{
    auto out = open_for_write(path);
    out << "date,is_holiday\n";
    for (auto d : calendar.days)
        out << format_date(d) << ",1\n";
}

SyntheticCityConfig SyntheticCityConfig::defaults()
{
    SyntheticCityConfig c;
    c.daily_profile = {0.10, 0.06, 0.05, 0.05, 0.08, 0.20, 0.50, 1.20, 2.20, 3.00, 3.20, 3.20,
                       3.00, 3.00, 2.90, 2.60, 2.20, 2.00, 1.80, 1.60, 1.20, 0.80, 0.40, 0.20};
    c.weekly_multipliers = {0.90, 0.90, 0.95, 1.00, 1.10, 1.30, 0.70};
    c.capacity = 900;
    c.event_days = {{10, 1.0}, {45, 1.5}, {80, 1.0}, {100, 1.2}};
    c.holiday_days = {21, 59, 101};
    return c;
}

void SyntheticCityConfig::validate() const
{
    std::vector<std::string> problems;
    if (days < 1)
        problems.emplace_back("days must be >= 1");
    if (capacity < 1)
        problems.emplace_back("capacity must be >= 1");
    if (daily_profile.size() != 24)
        problems.emplace_back("daily_profile needs 24 hourly rates");
    if (weekly_multipliers.size() != 7)
        problems.emplace_back("weekly_multipliers needs 7 factors");
    auto negative = [](const std::vector<double>& v) {
        return std::any_of(v.begin(), v.end(), [](double x) { return !(x >= 0.0); });
    };
    if (negative(daily_profile) || negative(weekly_multipliers))
        problems.emplace_back("rates and multipliers must be >= 0");
    for (const auto& e : event_days)
        if (e.intensity < 0 || e.day < 0)
            problems.emplace_back("event days need non-negative day and intensity");
    if (event_start_hour < 0 || event_end_hour > 24 || event_start_hour > event_end_hour)
        problems.emplace_back("event hours must satisfy 0 <= start <= end <= 24");
    if (noise_level < 0)
        problems.emplace_back("noise_level must be >= 0");
    if (stay_median_minutes <= 0 || stay_sigma < 0)
        problems.emplace_back("stay distribution needs median > 0 and sigma >= 0");
    if (locations < 1)
        problems.emplace_back("locations must be >= 1");
    if (flow_coupling < 0 || ambient_flow < 0 || flow_noise_sd < 0)
        problems.emplace_back("flow parameters must be >= 0");
    if (holiday_multiplier < 0)
        problems.emplace_back("holiday_multiplier must be >= 0");
    if (missing_rate < 0 || missing_rate >= 1)
        problems.emplace_back("missing_rate must lie in [0, 1)");
    const auto& w = weather;
    if (w.rain_start_probability < 0 || w.rain_start_probability > 1 || w.rain_stop_probability < 0 ||
        w.rain_stop_probability > 1 || w.noise_sd < 0 || w.rain_arrival_effect <= -1)
        problems.emplace_back("weather process parameters out of range");
    if (!problems.empty()) {
        std::string msg = "invalid synthetic city config:";
        for (const auto& p : problems)
            msg += " " + p + ";";
        fail(ErrorCode::InvalidConfig, msg);
    }
}

void to_json(nlohmann::json& j, const SyntheticCityConfig& c)
{
    nlohmann::json events = nlohmann::json::array();
    for (const auto& e : c.event_days)
        events.push_back({{"day", e.day}, {"intensity", e.intensity}});
    j = nlohmann::json{
        {"seed", c.seed},
        {"days", c.days},
        {"capacity", c.capacity},
        {"garage_id", c.garage_id},
        {"start", format_iso8601(c.start)},
        {"daily_profile", c.daily_profile},
        {"weekly_multipliers", c.weekly_multipliers},
        {"event_days", events},
        {"event_start_hour", c.event_start_hour},
        {"event_end_hour", c.event_end_hour},
        {"noise_level", c.noise_level},
        {"weather_process",
         {{"mean_temperature", c.weather.mean_temperature},
          {"daily_amplitude", c.weather.daily_amplitude},
          {"noise_sd", c.weather.noise_sd},
          {"rain_start_probability", c.weather.rain_start_probability},
          {"rain_stop_probability", c.weather.rain_stop_probability},
          {"rain_arrival_effect", c.weather.rain_arrival_effect}}},
        {"holiday_days", c.holiday_days},
        {"holiday_multiplier", c.holiday_multiplier},
        {"stay_median_minutes", c.stay_median_minutes},
        {"stay_sigma", c.stay_sigma},
        {"locations", c.locations},
        {"flow_coupling", c.flow_coupling},
        {"ambient_flow", c.ambient_flow},
        {"flow_noise_sd", c.flow_noise_sd},
        {"missing_rate", c.missing_rate},
    };
}

void from_json(const nlohmann::json& j, SyntheticCityConfig& c)
{
    c = SyntheticCityConfig::defaults();
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key))
            j.at(key).get_to(field);
    };
    get("seed", c.seed);
    get("days", c.days);
    get("capacity", c.capacity);
    get("garage_id", c.garage_id);
    if (j.contains("start")) {
        const auto t = parse_iso8601(j.at("start").get<std::string>());
        if (!t)
            fail(ErrorCode::InvalidConfig, "synth.start is not an ISO-8601 minute timestamp");
        c.start = *t;
    }
    get("daily_profile", c.daily_profile);
    get("weekly_multipliers", c.weekly_multipliers);
    if (j.contains("event_days")) {
        c.event_days.clear();
        for (const auto& e : j.at("event_days"))
            c.event_days.push_back({e.at("day").get<int>(), e.at("intensity").get<double>()});
    }
    get("event_start_hour", c.event_start_hour);
    get("event_end_hour", c.event_end_hour);
    get("noise_level", c.noise_level);
    if (j.contains("weather_process")) {
        const auto& w = j.at("weather_process");
        auto wget = [&](const char* key, double& field) {
            if (w.contains(key))
                w.at(key).get_to(field);
        };
        wget("mean_temperature", c.weather.mean_temperature);
        wget("daily_amplitude", c.weather.daily_amplitude);
        wget("noise_sd", c.weather.noise_sd);
        wget("rain_start_probability", c.weather.rain_start_probability);
        wget("rain_stop_probability", c.weather.rain_stop_probability);
        wget("rain_arrival_effect", c.weather.rain_arrival_effect);
    }
    get("holiday_days", c.holiday_days);
    get("holiday_multiplier", c.holiday_multiplier);
    get("stay_median_minutes", c.stay_median_minutes);
    get("stay_sigma", c.stay_sigma);
    get("locations", c.locations);
    get("flow_coupling", c.flow_coupling);
    get("ambient_flow", c.ambient_flow);
    get("flow_noise_sd", c.flow_noise_sd);
    get("missing_rate", c.missing_rate);
}

namespace {

double profile_at(const std::vector<double>& profile, int minute_of_day)
{
    const int h = minute_of_day / 60;
    const double frac = (minute_of_day % 60) / 60.0;
    return profile[static_cast<std::size_t>(h)] * (1.0 - frac) + profile[static_cast<std::size_t>((h + 1) % 24)] * frac;
}

}  // namespace

SyntheticCity generate_synthetic_city(const SyntheticCityConfig& config)
{
    config.validate();
    std::mt19937_64 rng(config.seed);

    SyntheticCity city;
    city.grid = MinuteGrid{config.start, static_cast<std::int64_t>(config.days) * kMinutesPerDay};
    const auto n = static_cast<std::size_t>(city.grid.length);
    for (int l = 0; l < config.locations; ++l) {
        char id[8];
        std::snprintf(id, sizeof id, "L%02d", l + 1);
        city.location_ids.emplace_back(id);
    }
    const std::int64_t first_day = day_index(config.start);
    for (int d : config.holiday_days)
        if (d >= 0 && d < config.days)
            city.holidays.days.insert(first_day + d);

    // Per-day intensity factors and per-location flow parameters.
    std::normal_distribution<double> std_normal(0.0, 1.0);
    std::vector<double> day_factor(static_cast<std::size_t>(config.days));
    for (auto& f : day_factor)
        f = std::exp(config.noise_level * std_normal(rng));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<double> coupling(static_cast<std::size_t>(config.locations)), ambient(coupling.size());
    for (std::size_t l = 0; l < coupling.size(); ++l) {
        coupling[l] = config.flow_coupling * (0.3 + 0.7 * unit(rng));
        ambient[l] = config.ambient_flow * (0.5 + 0.5 * unit(rng));
    }
    std::vector<double> event_intensity(static_cast<std::size_t>(config.days), 0.0);
    for (const auto& e : config.event_days)
        if (e.day < config.days)
            event_intensity[static_cast<std::size_t>(e.day)] += e.intensity;

    // Weather at a 10-minute cadence: daily temperature sinusoid plus AR(1), Markov rain.
    const auto& wp = config.weather;
    std::vector<int> rain_by_step;
    double ar = 0.0;
    int raining = 0;
    for (std::size_t t = 0; t < n; t += 10) {
        const Timestamp ts = city.grid.at(static_cast<std::int64_t>(t));
        ar = 0.95 * ar + wp.noise_sd * std_normal(rng);
        const double phase = 2.0 * std::numbers::pi * (minute_of_day(ts) - 9 * 60) / 1440.0;
        const double temp = std::round(wp.mean_temperature + wp.daily_amplitude * std::sin(phase) + ar);
        const double u = unit(rng);
        raining = raining ? (u < wp.rain_stop_probability ? 0 : 1) : (u < wp.rain_start_probability ? 1 : 0);
        rain_by_step.push_back(raining);
        if (config.missing_rate > 0 && unit(rng) < config.missing_rate)
            continue;
        city.weather.push_back({ts, temp, raining});
    }

    const double log_median = std::log(config.stay_median_minutes);
    std::lognormal_distribution<double> stay(log_median, config.stay_sigma);
    std::vector<std::int64_t> exits_at(n, 0);
    std::vector<double> arrivals(n, 0.0), departures(n, 0.0);
    std::int64_t count = 0;
    for (std::size_t t = 0; t < n; ++t) {
        const Timestamp ts = city.grid.at(static_cast<std::int64_t>(t));
        const auto d = static_cast<std::size_t>(t / static_cast<std::size_t>(kMinutesPerDay));
        const int mod = minute_of_day(ts);
        double rate = profile_at(config.daily_profile, mod) * config.weekly_multipliers[static_cast<std::size_t>(weekday(ts))] *
                      day_factor[d];
        if (city.holidays.is_holiday(ts))
            rate *= config.holiday_multiplier;
        if (rain_by_step[t / 10])
            rate *= 1.0 + wp.rain_arrival_effect;
        if (mod >= config.event_start_hour * 60 && mod < config.event_end_hour * 60)
            rate *= 1.0 + event_intensity[d];

        count -= exits_at[t];
        departures[t] = static_cast<double>(exits_at[t]);
        const int wanted = rate > 0 ? std::poisson_distribution<int>(rate)(rng) : 0;
        for (int k = 0; k < wanted; ++k) {
            if (count >= config.capacity) {
                ++city.rejected_arrivals;
                continue;
            }
            ++count;
            arrivals[t] += 1.0;
            const auto duration = std::max<std::int64_t>(1, std::llround(stay(rng)));
            const std::size_t exit = t + static_cast<std::size_t>(duration);
            if (exit < n)
                ++exits_at[exit];
            city.transactions.push_back({config.garage_id, ts, ts + duration});
        }
    }

    // Loop detectors see garage traffic plus ambient traffic following the daily profile.
    const double profile_peak = *std::max_element(config.daily_profile.begin(), config.daily_profile.end());
    city.traffic.reserve(n * coupling.size());
    for (std::size_t t = 0; t < n; ++t) {
        const Timestamp ts = city.grid.at(static_cast<std::int64_t>(t));
        const double shape = (profile_peak > 0 ? profile_at(config.daily_profile, minute_of_day(ts)) / profile_peak : 0.0) *
                             config.weekly_multipliers[static_cast<std::size_t>(weekday(ts))];
        for (std::size_t l = 0; l < coupling.size(); ++l) {
            const double flow = coupling[l] * (arrivals[t] + departures[t]) + ambient[l] * shape +
                                config.flow_noise_sd * std_normal(rng);
            if (config.missing_rate > 0 && unit(rng) < config.missing_rate)
                continue;
            city.traffic.push_back({city.location_ids[l], ts, std::max(0.0, std::round(flow * 10.0) / 10.0)});
        }
    }

    city.ground_truth =
        derive_states_from_transactions(to_stays(city.transactions), config.capacity, 0, city.grid, config.garage_id);
    return city;
}

std::vector<Stay> to_stays(const std::vector<TransactionRecord>& records)
{
    std::vector<Stay> stays;
    stays.reserve(records.size());
    for (const auto& r : records)
        stays.push_back({r.entry_time, r.exit_time});
    return stays;
}

ExogenousSeries build_exogenous(const std::vector<TrafficObservation>& traffic,
                                const std::vector<WeatherObservation>& weather, const HolidayCalendar& holidays,
                                const MinuteGrid& grid)
{
    ExogenousSeries ex;
    ex.grid = grid;
    std::map<std::string, std::vector<Observation>> by_location;
    for (const auto& o : traffic)
        by_location[o.location_id].push_back({o.time, o.flow});
    for (auto& [id, obs] : by_location) {
        std::stable_sort(obs.begin(), obs.end(), [](const auto& a, const auto& b) { return a.time < b.time; });
        ex.location_ids.push_back(id);
        // Flows are per-minute readings; a reading only speaks for its own minute.
        ex.traffic_flow.push_back(resample_to_minutes(obs, grid, 1));
    }

    std::vector<Observation> temp, rain;
    for (const auto& w : weather) {
        temp.push_back({w.time, w.temperature});
        rain.push_back({w.time, static_cast<double>(w.rain)});
    }
    auto by_time = [](const Observation& a, const Observation& b) { return a.time < b.time; };
    std::stable_sort(temp.begin(), temp.end(), by_time);
    std::stable_sort(rain.begin(), rain.end(), by_time);
    ex.temperature = resample_to_minutes(temp, grid, 60);
    ex.rain = resample_to_minutes(rain, grid, 60);

    ex.holiday.resize(static_cast<std::size_t>(grid.length));
    for (std::int64_t i = 0; i < grid.length; ++i)
        ex.holiday[static_cast<std::size_t>(i)] = holidays.is_holiday(grid.at(i)) ? 1.0 : 0.0;
    return ex;
}

}  // namespace parkcast
