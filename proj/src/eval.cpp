#include "parkcast/eval.hpp"

#include "parkcast/error.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>

namespace parkcast {

namespace {

void check_pair(std::span<const double> pred, std::span<const double> actual)
{
    if (pred.empty() || actual.empty())
        fail(ErrorCode::EmptyInput, "metric inputs must be non-empty");
    if (pred.size() != actual.size())
        fail(ErrorCode::ShapeMismatch, "prediction and actual lengths differ");
}

// Linear interpolation between order statistics.
double quantile(std::vector<double> sorted, double q)
{
    if (sorted.empty())
        return 0.0;
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - static_cast<double>(lo));
}

nlohmann::json metrics_json(const MetricSet& m)
{
    return {{"mse", m.mse}, {"mae", m.mae}, {"mase", m.mase ? nlohmann::json(*m.mase) : nlohmann::json(nullptr)}, {"n", m.n}};
}

}  // namespace

double mse(std::span<const double> pred, std::span<const double> actual)
{
    check_pair(pred, actual);
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        acc += (pred[i] - actual[i]) * (pred[i] - actual[i]);
    return acc / static_cast<double>(pred.size());
}

double mae(std::span<const double> pred, std::span<const double> actual)
{
    check_pair(pred, actual);
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        acc += std::abs(pred[i] - actual[i]);
    return acc / static_cast<double>(pred.size());
}

double mase(double model_mae, double naive_mae)
{
    if (!(naive_mae > 0.0))
        fail(ErrorCode::NaiveZero, "naive MAE is zero; MASE is undefined");
    return model_mae / naive_mae;
}

std::vector<int> EvaluationReport::naive_zero_horizons() const
{
    std::vector<int> out;
    for (const auto& h : per_horizon)
        if (h.naive_zero)
            out.push_back(h.horizon);
    return out;
}

MetricSet EvaluationReport::pooled_up_to(int max_horizon) const
{
    MetricSet m;
    double naive_sum = 0.0;
    for (const auto& h : per_horizon) {
        if (h.horizon > max_horizon)
            continue;
        const auto n = static_cast<double>(h.model.n);
        m.mse += h.model.mse * n;
        m.mae += h.model.mae * n;
        naive_sum += h.naive_mae * n;
        m.n += h.model.n;
    }
    if (m.n == 0)
        return m;
    m.mse /= static_cast<double>(m.n);
    m.mae /= static_cast<double>(m.n);
    const double naive = naive_sum / static_cast<double>(m.n);
    if (naive > 0.0)
        m.mase = m.mae / naive;
    return m;
}

nlohmann::json EvaluationReport::to_json() const
{
    nlohmann::json horizons = nlohmann::json::array();
    for (const auto& h : per_horizon) {
        auto j = metrics_json(h.model);
        j["horizon_min"] = h.horizon;
        j["naive_mae"] = h.naive_mae;
        j["naive_zero"] = h.naive_zero;
        horizons.push_back(std::move(j));
    }
    const auto summary = summarize_scaled_errors(scaled_errors);
    nlohmann::json j = {
        {"target", target},
        {"model", model},
        {"per_horizon", horizons},
        {"pooled", metrics_json(pooled)},
        {"pooled_naive_mae", pooled_naive_mae},
        {"naive_zero_horizons", naive_zero_horizons()},
        {"scaled_error_summary",
         {{"n", summary.n},
          {"q1", summary.q1},
          {"median", summary.median},
          {"q3", summary.q3},
          {"fraction_below_one", summary.fraction_below_one}}},
    };
    if (latency)
        j["latency"] = parkcast::to_json(*latency);
    return j;
}

EvaluationReport evaluate_records(std::span<const PredictionRecord> records, std::span<const int> horizons,
                                  std::string target, std::string model)
{
    if (records.empty())
        fail(ErrorCode::EmptyInput, "no predictions to evaluate");
    EvaluationReport report;
    report.target = std::move(target);
    report.model = std::move(model);

    std::map<int, std::size_t> slot;
    for (std::size_t i = 0; i < horizons.size(); ++i)
        slot[horizons[i]] = i;
    struct Acc {
        double se = 0.0, ae = 0.0, naive_ae = 0.0;
        std::size_t n = 0;
    };
    std::vector<Acc> acc(horizons.size());
    for (const auto& r : records) {
        const auto it = slot.find(r.horizon);
        if (it == slot.end())
            fail(ErrorCode::ShapeMismatch, "record horizon " + std::to_string(r.horizon) + " is not on the grid");
        auto& a = acc[it->second];
        const double e = r.predicted - r.actual;
        a.se += e * e;
        a.ae += std::abs(e);
        a.naive_ae += std::abs(r.naive - r.actual);
        ++a.n;
    }

    double se = 0.0, ae = 0.0, naive_ae = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < horizons.size(); ++i) {
        const auto& a = acc[i];
        HorizonMetrics h;
        h.horizon = horizons[i];
        h.model.n = a.n;
        if (a.n > 0) {
            h.model.mse = a.se / static_cast<double>(a.n);
            h.model.mae = a.ae / static_cast<double>(a.n);
            h.naive_mae = a.naive_ae / static_cast<double>(a.n);
        }
        h.naive_zero = !(h.naive_mae > 0.0);
        if (!h.naive_zero)
            h.model.mase = h.model.mae / h.naive_mae;
        report.per_horizon.push_back(h);
        se += a.se;
        ae += a.ae;
        naive_ae += a.naive_ae;
        n += a.n;
    }
    report.pooled.n = n;
    report.pooled.mse = se / static_cast<double>(n);
    report.pooled.mae = ae / static_cast<double>(n);
    report.pooled_naive_mae = naive_ae / static_cast<double>(n);
    if (report.pooled_naive_mae > 0.0)
        report.pooled.mase = report.pooled.mae / report.pooled_naive_mae;

    report.scaled_errors.reserve(records.size());
    for (const auto& r : records) {
        const auto& h = report.per_horizon[slot[r.horizon]];
        if (h.naive_zero)
            continue;
        report.scaled_errors.push_back({r.issued, r.horizon, std::abs(r.predicted - r.actual) / h.naive_mae});
    }
    return report;
}

EvaluationReport evaluate(const ModelArtifact& artifact, const SupervisedSet& test, const NaiveFn& naive)
{
    if (test.schema_digest != artifact.schema.digest())
        fail(ErrorCode::SchemaMismatch, "test set was encoded with a different schema than the model");
    if (test.horizons != artifact.horizons)
        fail(ErrorCode::SchemaMismatch, "test set horizons differ from the model's");
    if (test.target != artifact.target)
        fail(ErrorCode::SchemaMismatch, "test set target differs from the model's");
    const Matrix pred = artifact.predict_batch(test);
    std::vector<PredictionRecord> records;
    records.reserve(test.rows() * test.horizons.size());
    for (std::size_t r = 0; r < test.rows(); ++r)
        for (std::size_t k = 0; k < test.horizons.size(); ++k) {
            const int h = test.horizons.minutes[k];
            records.push_back({test.times[r], h, pred(r, k), test.Y(r, k), naive(test.times[r], h)});
        }
    return evaluate_records(records, test.horizons.minutes, std::string(to_string(artifact.target)),
                            std::string(to_string(artifact.kind)));
}

DistributionSummary summarize_scaled_errors(std::span<const ScaledError> errors)
{
    DistributionSummary s;
    s.n = errors.size();
    if (errors.empty())
        return s;
    std::vector<double> v;
    v.reserve(errors.size());
    std::size_t below = 0;
    for (const auto& e : errors) {
        v.push_back(e.value);
        below += e.value < 1.0;
    }
    std::sort(v.begin(), v.end());
    s.q1 = quantile(v, 0.25);
    s.median = quantile(v, 0.5);
    s.q3 = quantile(v, 0.75);
    s.fraction_below_one = static_cast<double>(below) / static_cast<double>(errors.size());
    return s;
}

void export_error_distribution(const EvaluationReport& report, const std::filesystem::path& csv_path,
                               const std::filesystem::path& summary_path)
{
    for (const auto& p : {csv_path, summary_path})
        if (p.has_parent_path())
            std::filesystem::create_directories(p.parent_path());
    std::ofstream csv(csv_path, std::ios::binary);
    if (!csv)
        fail(ErrorCode::IoError, "cannot write " + csv_path.string());
    csv << "timestamp,horizon_min,scaled_error\n";
    for (const auto& e : report.scaled_errors)
        csv << format_iso8601(e.time) << ',' << e.horizon << ',' << format_double(e.value) << '\n';
    if (!csv)
        fail(ErrorCode::IoError, "failed writing " + csv_path.string());

    const auto s = summarize_scaled_errors(report.scaled_errors);
    std::ofstream js(summary_path, std::ios::binary);
    if (!js)
        fail(ErrorCode::IoError, "cannot write " + summary_path.string());
    js << nlohmann::json{{"target", report.target},
                         {"model", report.model},
                         {"n", s.n},
                         {"q1", s.q1},
                         {"median", s.median},
                         {"q3", s.q3},
                         {"fraction_below_one", s.fraction_below_one}}
              .dump(2)
       << '\n';
}

LatencyStats measure_latency(const ModelArtifact& artifact, std::span<const FeatureVector> inputs, int repetitions)
{
    if (repetitions < 1)
        fail(ErrorCode::InvalidConfig, "repetitions must be >= 1");
    if (inputs.empty())
        fail(ErrorCode::EmptyInput, "no inputs to time");
    volatile double sink = 0.0;
    for (const auto& x : inputs)
        sink = sink + artifact.predict(x)[0];

    std::vector<double> ms;
    ms.reserve(static_cast<std::size_t>(repetitions));
    for (int r = 0; r < repetitions; ++r) {
        const auto& x = inputs[static_cast<std::size_t>(r) % inputs.size()];
        const auto t0 = std::chrono::steady_clock::now();
        const auto out = artifact.predict(x);
        const auto t1 = std::chrono::steady_clock::now();
        sink = sink + out[0];
        ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    LatencyStats s;
    s.n = ms.size();
    double total = 0.0;
    for (double v : ms)
        total += v;
    s.mean_ms = total / static_cast<double>(ms.size());
    std::sort(ms.begin(), ms.end());
    s.min_ms = ms.front();
    s.max_ms = ms.back();
    s.median_ms = quantile(ms, 0.5);
    s.p95_ms = quantile(ms, 0.95);
    return s;
}

nlohmann::json to_json(const LatencyStats& s)
{
    return {{"n", s.n},       {"mean_ms", s.mean_ms}, {"min_ms", s.min_ms},
            {"median_ms", s.median_ms}, {"p95_ms", s.p95_ms}, {"max_ms", s.max_ms}};
}

}  // namespace parkcast
