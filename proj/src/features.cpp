#include "parkcast/features.hpp"

#include "parkcast/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace parkcast {

std::string_view to_string(FeatureCategory c) noexcept
{
    switch (c) {
    case FeatureCategory::time: return "time";
    case FeatureCategory::weather: return "weather";
    case FeatureCategory::traffic_flow: return "traffic_flow";
    case FeatureCategory::occupancy_lookback: return "occupancy_lookback";
    case FeatureCategory::calendar: return "calendar";
    }
    return "unknown";
}

std::optional<FeatureCategory> parse_category(std::string_view name)
{
    for (auto c : kAllCategories)
        if (to_string(c) == name)
            return c;
    return std::nullopt;
}

std::string_view to_string(Target t) noexcept
{
    switch (t) {
    case Target::occupancy: return "occupancy";
    case Target::influx: return "influx";
    case Target::outflux: return "outflux";
    }
    return "unknown";
}

std::optional<Target> parse_target(std::string_view name)
{
    for (auto t : kAllTargets)
        if (to_string(t) == name)
            return t;
    return std::nullopt;
}

SignalFrame prepare_signals(const Dataset& dataset, const SignalConfig& config)
{
    if (config.flux_interval < 1)
        fail(ErrorCode::InvalidConfig, "flux_interval must be >= 1");
    const auto coeffs = butterworth_design(config.filter_order, config.cutoff);

    SignalFrame f;
    f.grid = dataset.grid;
    f.location_ids = dataset.exogenous.location_ids;
    f.occupancy = dataset.garage.occupancy_rate;
    f.influx = dataset.garage.influx;
    f.outflux = dataset.garage.outflux;
    for (const auto& flow : dataset.exogenous.traffic_flow)
        f.flow_rolling.push_back(rolling_sum(filter_apply_causal(coeffs, flow), config.rolling_window));
    f.temperature = dataset.exogenous.temperature;
    f.rain = dataset.exogenous.rain;
    f.holiday = dataset.exogenous.holiday;
    f.row_mask = dataset.row_mask;
    f.config = config;
    return f;
}

std::optional<RawInputs> raw_inputs_at(const SignalFrame& frame, std::int64_t index)
{
    if (index < 0 || index >= frame.grid.length)
        return std::nullopt;
    const auto i = static_cast<std::size_t>(index);
    if (!frame.row_mask[i])
        return std::nullopt;
    auto lookback = build_lookbacks_anchored(frame.occupancy, frame.flow_rolling, index, frame.config.lookback);
    if (!lookback)
        return std::nullopt;
    RawInputs in;
    in.t = frame.grid.at(index);
    in.lookback = std::move(*lookback);
    in.temperature = frame.temperature[i];
    in.rain = frame.rain[i];
    in.holiday = frame.holiday[i];
    if (is_missing(in.temperature) || is_missing(in.rain) || is_missing(in.holiday))
        return std::nullopt;
    return in;
}

std::vector<std::pair<std::string, FeatureCategory>> raw_feature_layout(std::span<const std::string> location_ids,
                                                                        const LookbackConfig& lookback)
{
    std::vector<std::pair<std::string, FeatureCategory>> layout;
    layout.emplace_back("tod_sin", FeatureCategory::time);
    layout.emplace_back("tod_cos", FeatureCategory::time);
    layout.emplace_back("holiday", FeatureCategory::time);
    static constexpr const char* days[] = {"mon", "tue", "wed", "thu", "fri", "sat", "sun"};
    for (const char* d : days)
        layout.emplace_back(std::string("weekday_") + d, FeatureCategory::calendar);
    layout.emplace_back("temperature", FeatureCategory::weather);
    layout.emplace_back("rain", FeatureCategory::weather);
    for (const auto& loc : location_ids)
        for (int k = 0; k < lookback.flow_lags; ++k)
            layout.emplace_back("flow_" + loc + "_lag" + std::to_string(k), FeatureCategory::traffic_flow);
    for (int k = 0; k < lookback.occupancy_lags; ++k)
        layout.emplace_back("occupancy_lag" + std::to_string(k), FeatureCategory::occupancy_lookback);
    return layout;
}

std::vector<double> raw_feature_values(const RawInputs& in)
{
    std::vector<double> v;
    const double phase = 2.0 * std::numbers::pi * minute_of_day(in.t) / static_cast<double>(kMinutesPerDay);
    v.push_back(std::sin(phase));
    v.push_back(std::cos(phase));
    v.push_back(in.holiday);
    const int wd = weekday(in.t);
    for (int d = 0; d < 7; ++d)
        v.push_back(d == wd ? 1.0 : 0.0);
    v.push_back(in.temperature);
    v.push_back(in.rain);
    for (const auto& loc : in.lookback.flow_lags)
        v.insert(v.end(), loc.begin(), loc.end());
    v.insert(v.end(), in.lookback.occupancy_lags.begin(), in.lookback.occupancy_lags.end());
    return v;
}

FeatureSchema::FeatureSchema(std::vector<FeatureSpec> features, std::vector<std::string> location_ids,
                             LookbackConfig lookback)
    : features_(std::move(features)), location_ids_(std::move(location_ids)), lookback_(lookback)
{
    digest_ = sha256_hex(to_json().dump());
}

std::size_t FeatureSchema::category_width(FeatureCategory c) const
{
    return static_cast<std::size_t>(
        std::count_if(features_.begin(), features_.end(), [c](const FeatureSpec& f) { return f.category == c; }));
}

void FeatureSchema::apply_into(std::span<const double> raw, std::span<double> out) const
{
    for (std::size_t i = 0; i < features_.size(); ++i) {
        const auto& f = features_[i];
        out[i] = (raw[f.source] - f.offset) / f.scale;
    }
}

FeatureVector FeatureSchema::apply(std::span<const double> raw) const
{
    FeatureVector v;
    v.values.resize(features_.size());
    apply_into(raw, v.values);
    v.schema_digest = digest_;
    return v;
}

FeatureSchema FeatureSchema::without(FeatureCategory c) const
{
    std::vector<FeatureSpec> kept;
    for (const auto& f : features_)
        if (f.category != c)
            kept.push_back(f);
    return FeatureSchema(std::move(kept), location_ids_, lookback_);
}

nlohmann::json FeatureSchema::to_json() const
{
    nlohmann::json feats = nlohmann::json::array();
    for (const auto& f : features_)
        feats.push_back({{"name", f.name},
                         {"category", to_string(f.category)},
                         {"source", f.source},
                         {"offset", f.offset},
                         {"scale", f.scale}});
    return {{"features", feats},
            {"location_ids", location_ids_},
            {"lookback",
             {{"occupancy_lags", lookback_.occupancy_lags},
              {"occupancy_cadence", lookback_.occupancy_cadence},
              {"flow_lags", lookback_.flow_lags},
              {"flow_step", lookback_.flow_step}}}};
}

FeatureSchema FeatureSchema::from_json(const nlohmann::json& j)
{
    std::vector<FeatureSpec> feats;
    for (const auto& f : j.at("features")) {
        const auto cat = parse_category(f.at("category").get<std::string>());
        if (!cat)
            fail(ErrorCode::UnknownCategory, "unknown feature category " + f.at("category").get<std::string>());
        feats.push_back({f.at("name").get<std::string>(), *cat, f.at("source").get<std::size_t>(),
                         f.at("offset").get<double>(), f.at("scale").get<double>()});
    }
    LookbackConfig lb;
    const auto& l = j.at("lookback");
    lb.occupancy_lags = l.at("occupancy_lags").get<int>();
    lb.occupancy_cadence = l.at("occupancy_cadence").get<int>();
    lb.flow_lags = l.at("flow_lags").get<int>();
    lb.flow_step = l.at("flow_step").get<int>();
    return FeatureSchema(std::move(feats), j.at("location_ids").get<std::vector<std::string>>(), lb);
}

FeatureSchema fit_schema(const SignalFrame& frame, std::span<const std::int64_t> train_rows,
                         std::span<const FeatureCategory> excluded)
{
    const auto layout = raw_feature_layout(frame.location_ids, frame.config.lookback);
    std::vector<double> lo(layout.size(), std::numeric_limits<double>::infinity());
    std::vector<double> hi(layout.size(), -std::numeric_limits<double>::infinity());
    std::size_t seen = 0;
    for (auto index : train_rows) {
        const auto in = raw_inputs_at(frame, index);
        if (!in)
            continue;
        ++seen;
        const auto raw = raw_feature_values(*in);
        for (std::size_t k = 0; k < raw.size(); ++k) {
            lo[k] = std::min(lo[k], raw[k]);
            hi[k] = std::max(hi[k], raw[k]);
        }
    }
    if (seen == 0)
        fail(ErrorCode::EmptyResult, "no complete training rows to fit feature scaling on");

    std::vector<FeatureSpec> specs;
    for (std::size_t k = 0; k < layout.size(); ++k) {
        const auto& [name, cat] = layout[k];
        if (std::find(excluded.begin(), excluded.end(), cat) != excluded.end())
            continue;
        FeatureSpec spec{name, cat, k, 0.0, 1.0};
        const bool min_max = cat == FeatureCategory::traffic_flow || name == "temperature";
        if (min_max) {
            spec.offset = lo[k];
            spec.scale = hi[k] > lo[k] ? hi[k] - lo[k] : 1.0;
        }
        specs.push_back(std::move(spec));
    }
    if (specs.empty())
        fail(ErrorCode::NoFeatures, "every feature category was excluded");
    return FeatureSchema(std::move(specs), frame.location_ids, frame.config.lookback);
}

FeatureVector encode_row(const SignalFrame& frame, Timestamp t, const FeatureSchema& schema)
{
    const auto index = frame.grid.index_of(t);
    const auto in = index ? raw_inputs_at(frame, *index) : std::nullopt;
    if (!in)
        fail(ErrorCode::IncompleteRow, "row at " + format_iso8601(t) + " is incomplete");
    return schema.apply(raw_feature_values(*in));
}

HorizonGrid HorizonGrid::standard()
{
    HorizonGrid g;
    for (int h = 5; h <= 90; h += 5)
        g.minutes.push_back(h);
    return g;
}

void HorizonGrid::validate() const
{
    if (minutes.empty())
        fail(ErrorCode::InvalidConfig, "horizon grid is empty");
    for (std::size_t i = 0; i < minutes.size(); ++i) {
        if (minutes[i] <= 0 || minutes[i] % 5 != 0 || minutes[i] > 90)
            fail(ErrorCode::InvalidConfig, "horizons must be positive multiples of 5 up to 90");
        if (i > 0 && minutes[i] <= minutes[i - 1])
            fail(ErrorCode::InvalidConfig, "horizons must be ascending");
    }
}

SupervisedSet SupervisedSet::select(std::span<const std::size_t> indices) const
{
    SupervisedSet s;
    s.X = X.select_rows(indices);
    s.Y = Y.select_rows(indices);
    for (auto i : indices)
        s.times.push_back(times[i]);
    s.schema_digest = schema_digest;
    s.target = target;
    s.horizons = horizons;
    return s;
}

Series target_series(const SignalFrame& frame, Target target)
{
    if (target == Target::occupancy)
        return frame.occupancy;
    const Series& per_minute = target == Target::influx ? frame.influx : frame.outflux;
    return rolling_sum(per_minute, frame.config.flux_interval);
}

SupervisedSet build_supervised(const SignalFrame& frame, const FeatureSchema& schema, const HorizonGrid& horizons,
                               Target target, std::span<const std::int64_t> rows, int stride)
{
    horizons.validate();
    if (stride < 1)
        fail(ErrorCode::InvalidConfig, "stride must be >= 1");
    const Series y = target_series(frame, target);

    SupervisedSet set;
    set.schema_digest = schema.digest();
    set.target = target;
    set.horizons = horizons;
    set.X.cols = schema.width();
    set.Y.cols = horizons.size();
    std::vector<double> x(schema.width()), targets(horizons.size());
    for (auto index : rows) {
        if (index % stride != 0)
            continue;
        bool complete = true;
        for (std::size_t k = 0; k < horizons.size() && complete; ++k) {
            const std::int64_t j = index + horizons.minutes[k];
            if (j >= frame.grid.length || is_missing(y[static_cast<std::size_t>(j)]))
                complete = false;
            else
                targets[k] = y[static_cast<std::size_t>(j)];
        }
        if (!complete)
            continue;
        const auto in = raw_inputs_at(frame, index);
        if (!in)
            continue;
        schema.apply_into(raw_feature_values(*in), x);
        set.X.append_row(x);
        set.Y.append_row(targets);
        set.times.push_back(frame.grid.at(index));
    }
    if (set.times.empty())
        fail(ErrorCode::EmptyResult, "no complete supervised rows");
    return set;
}

std::pair<SupervisedSet, FeatureSchema> eliminate_category(const SupervisedSet& set, const FeatureSchema& schema,
                                                           FeatureCategory category)
{
    if (!schema.has_category(category))
        fail(ErrorCode::UnknownCategory, "schema has no '" + std::string(to_string(category)) + "' features");
    if (set.schema_digest != schema.digest() || set.X.cols != schema.width())
        fail(ErrorCode::SchemaMismatch, "supervised set was not encoded with this schema");
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < schema.width(); ++i)
        if (schema.features()[i].category != category)
            keep.push_back(i);
    if (keep.empty())
        fail(ErrorCode::NoFeatures, "eliminating '" + std::string(to_string(category)) + "' leaves no features");
    FeatureSchema reduced = schema.without(category);
    SupervisedSet out;
    out.X = set.X.select_cols(keep);
    out.Y = set.Y;
    out.times = set.times;
    out.schema_digest = reduced.digest();
    out.target = set.target;
    out.horizons = set.horizons;
    return {std::move(out), std::move(reduced)};
}

}  // namespace parkcast
