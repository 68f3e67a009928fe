#pragma once

#include "parkcast/datamodel.hpp"
#include "parkcast/signal.hpp"
#include "parkcast/util.hpp"

#include <json.hpp>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace parkcast {

enum class FeatureCategory { time, weather, traffic_flow, occupancy_lookback, calendar };

inline constexpr FeatureCategory kAllCategories[] = {FeatureCategory::time, FeatureCategory::weather,
                                                     FeatureCategory::traffic_flow, FeatureCategory::occupancy_lookback,
                                                     FeatureCategory::calendar};

std::string_view to_string(FeatureCategory c) noexcept;
std::optional<FeatureCategory> parse_category(std::string_view name);

enum class Target { occupancy, influx, outflux };

inline constexpr Target kAllTargets[] = {Target::occupancy, Target::influx, Target::outflux};

std::string_view to_string(Target t) noexcept;
std::optional<Target> parse_target(std::string_view name);

struct SignalConfig {
    int filter_order = 2;
    double cutoff = 0.05;      // fraction of Nyquist
    int rolling_window = 10;   // minutes
    int flux_interval = 5;     // minutes summed into one flux target value
    LookbackConfig lookback;
};

/// Per-minute preprocessed signals the encoder reads from.
struct SignalFrame {
    MinuteGrid grid;
    std::vector<std::string> location_ids;
    Series occupancy;
    Series influx;
    Series outflux;
    std::vector<Series> flow_rolling;  // smoothed, then rolling sum
    Series temperature;
    Series rain;
    Series holiday;
    std::vector<std::uint8_t> row_mask;
    SignalConfig config;
};

SignalFrame prepare_signals(const Dataset& dataset, const SignalConfig& config = {});

/// Unscaled model inputs anchored at one occupancy observation time.
struct RawInputs {
    Timestamp t;
    LookbackWindow lookback;
    double temperature = 0.0;
    double rain = 0.0;
    double holiday = 0.0;
};

std::optional<RawInputs> raw_inputs_at(const SignalFrame& frame, std::int64_t index);

struct FeatureSpec {
    std::string name;
    FeatureCategory category;
    std::size_t source = 0;  // index into the raw feature layout
    double offset = 0.0;
    double scale = 1.0;      // encoded = (raw - offset) / scale
};

struct FeatureVector {
    std::vector<double> values;
    std::string schema_digest;
};

class FeatureSchema {
public:
    FeatureSchema() = default;
    FeatureSchema(std::vector<FeatureSpec> features, std::vector<std::string> location_ids, LookbackConfig lookback);

    const std::vector<FeatureSpec>& features() const { return features_; }
    const std::vector<std::string>& location_ids() const { return location_ids_; }
    const LookbackConfig& lookback() const { return lookback_; }
    const std::string& digest() const { return digest_; }
    std::size_t width() const { return features_.size(); }
    std::size_t category_width(FeatureCategory c) const;
    bool has_category(FeatureCategory c) const { return category_width(c) > 0; }

    /// Applies selection and scaling to a full raw feature row.
    FeatureVector apply(std::span<const double> raw) const;
    void apply_into(std::span<const double> raw, std::span<double> out) const;

    FeatureSchema without(FeatureCategory c) const;

    nlohmann::json to_json() const;
    static FeatureSchema from_json(const nlohmann::json& j);

private:
    std::vector<FeatureSpec> features_;
    std::vector<std::string> location_ids_;
    LookbackConfig lookback_;
    std::string digest_;
};

/// Names and categories of the full raw layout, in order.
std::vector<std::pair<std::string, FeatureCategory>> raw_feature_layout(std::span<const std::string> location_ids,
                                                                        const LookbackConfig& lookback);
/// Raw row in `raw_feature_layout` order: time of day as sin/cos of
/// 2*pi*minute/1440, holiday, weekday one-hot (Monday = 0), temperature, rain,
/// flow lags per location newest-first, occupancy lags newest-first.
std::vector<double> raw_feature_values(const RawInputs& in);

/// Min-max constants for temperature and flows from the given (training) rows.
FeatureSchema fit_schema(const SignalFrame& frame, std::span<const std::int64_t> train_rows,
                         std::span<const FeatureCategory> excluded = {});

/// Throws IncompleteRow when the row at `t` lacks any input.
FeatureVector encode_row(const SignalFrame& frame, Timestamp t, const FeatureSchema& schema);

struct HorizonGrid {
    std::vector<int> minutes;

    static HorizonGrid standard();  // 5, 10, ..., 90
    void validate() const;
    std::size_t size() const { return minutes.size(); }
    bool operator==(const HorizonGrid&) const = default;
};

struct SupervisedSet {
    Matrix X;
    Matrix Y;
    std::vector<Timestamp> times;
    std::string schema_digest;
    Target target = Target::occupancy;
    HorizonGrid horizons;

    std::size_t rows() const { return X.rows; }
    SupervisedSet select(std::span<const std::size_t> indices) const;
};

/// Per-minute target values: occupancy rate, or flux summed over the
/// `flux_interval` minutes ending at each minute.
Series target_series(const SignalFrame& frame, Target target);

/// Rows are kept when their index is in `rows`, divisible by `stride`, and
/// every feature and all horizon targets are present.
SupervisedSet build_supervised(const SignalFrame& frame, const FeatureSchema& schema, const HorizonGrid& horizons,
                               Target target, std::span<const std::int64_t> rows, int stride = 1);

std::pair<SupervisedSet, FeatureSchema> eliminate_category(const SupervisedSet& set, const FeatureSchema& schema,
                                                           FeatureCategory category);

}  // namespace parkcast
