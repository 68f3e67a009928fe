#pragma once

#include "parkcast/artifact.hpp"
#include "parkcast/features.hpp"
#include "parkcast/naive.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace parkcast {

double mse(std::span<const double> pred, std::span<const double> actual);
double mae(std::span<const double> pred, std::span<const double> actual);
/// Throws NaiveZero when the naive MAE is not positive.
double mase(double model_mae, double naive_mae);

struct MetricSet {
    double mse = 0.0;
    double mae = 0.0;
    std::optional<double> mase;  // empty when the naive MAE is zero
    std::size_t n = 0;
};

struct HorizonMetrics {
    int horizon = 0;
    MetricSet model;
    double naive_mae = 0.0;
    bool naive_zero = false;
};

struct ScaledError {
    Timestamp time;  // instant the prediction was issued from
    int horizon = 0;
    double value = 0.0;
};

struct LatencyStats {
    std::size_t n = 0;
    double mean_ms = 0.0;
    double min_ms = 0.0;
    double median_ms = 0.0;
    double p95_ms = 0.0;
    double max_ms = 0.0;
};

struct EvaluationReport {
    std::string target;
    std::string model;
    std::vector<HorizonMetrics> per_horizon;
    MetricSet pooled;
    double pooled_naive_mae = 0.0;
    std::vector<ScaledError> scaled_errors;
    std::optional<LatencyStats> latency;

    std::vector<int> naive_zero_horizons() const;
    /// Pooled metrics restricted to horizons <= max_horizon.
    MetricSet pooled_up_to(int max_horizon) const;
    nlohmann::json to_json() const;
};

/// One prediction paired with its outcome and the naive forecast for it.
struct PredictionRecord {
    Timestamp issued;
    int horizon = 0;
    double predicted = 0.0;
    double actual = 0.0;
    double naive = 0.0;
};

/// Per-horizon metrics over `horizons`, pooled metrics over every record, and
/// per-instance errors scaled by their horizon's naive MAE.
EvaluationReport evaluate_records(std::span<const PredictionRecord> records, std::span<const int> horizons,
                                  std::string target, std::string model);

using NaiveFn = std::function<double(Timestamp, int)>;

EvaluationReport evaluate(const ModelArtifact& artifact, const SupervisedSet& test, const NaiveFn& naive);

/// Writes `errors.csv` style rows (timestamp,horizon_min,scaled_error) and a
/// JSON summary (quartiles, fraction below 1) next to it.
void export_error_distribution(const EvaluationReport& report, const std::filesystem::path& csv_path,
                               const std::filesystem::path& summary_path);

struct DistributionSummary {
    std::size_t n = 0;
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
    double fraction_below_one = 0.0;
};

DistributionSummary summarize_scaled_errors(std::span<const ScaledError> errors);

/// Wall-clock latency of `repetitions` single predictions, cycling through
/// `inputs`, after one warm-up pass over them.
LatencyStats measure_latency(const ModelArtifact& artifact, std::span<const FeatureVector> inputs, int repetitions);

nlohmann::json to_json(const LatencyStats& s);

}  // namespace parkcast
