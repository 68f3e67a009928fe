#include "parkcast/signal.hpp"

#include "parkcast/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace parkcast {

namespace {

// Coefficients of prod_k (1 - r_k z^-1), ascending powers of z^-1.
std::vector<std::complex<double>> expand_roots(std::span<const std::complex<double>> roots)
{
    std::vector<std::complex<double>> poly{1.0};
    for (const auto& r : roots) {
        poly.push_back(0.0);
        for (std::size_t i = poly.size() - 1; i > 0; --i)
            poly[i] -= r * poly[i - 1];
    }
    return poly;
}

}  // namespace

double FilterCoefficients::dc_gain() const
{
    double sb = 0.0, sa = 0.0;
    for (double v : b)
        sb += v;
    for (double v : a)
        sa += v;
    return sb / sa;
}

std::vector<std::complex<double>> FilterCoefficients::poles() const
{
    // Companion-matrix free: closed forms for the orders we build, Durand-Kerner otherwise.
    const std::size_t n = order();
    if (n == 0)
        return {};
    if (n == 1)
        return {std::complex<double>(-a[1], 0.0)};
    if (n == 2) {
        const std::complex<double> disc = std::sqrt(std::complex<double>(a[1] * a[1] - 4.0 * a[2], 0.0));
        return {(-a[1] + disc) / 2.0, (-a[1] - disc) / 2.0};
    }
    std::vector<std::complex<double>> roots(n);
    const std::complex<double> seed(0.4, 0.9);
    for (std::size_t i = 0; i < n; ++i)
        roots[i] = std::pow(seed, static_cast<double>(i));
    for (int iter = 0; iter < 500; ++iter) {
        for (std::size_t i = 0; i < n; ++i) {
            std::complex<double> num = 1.0;
            for (std::size_t k = 1; k <= n; ++k)
                num = num * roots[i] + a[k];
            std::complex<double> den = 1.0;
            for (std::size_t j = 0; j < n; ++j)
                if (j != i)
                    den *= roots[i] - roots[j];
            roots[i] -= num / den;
        }
    }
    return roots;
}

double FilterCoefficients::magnitude(double f) const
{
    const std::complex<double> zinv = std::polar(1.0, -std::numbers::pi * f);
    std::complex<double> num = 0.0, den = 0.0, p = 1.0;
    for (std::size_t i = 0; i < std::max(a.size(), b.size()); ++i) {
        if (i < b.size())
            num += b[i] * p;
        if (i < a.size())
            den += a[i] * p;
        p *= zinv;
    }
    return std::abs(num / den);
}

FilterCoefficients butterworth_design(int order, double cutoff)
{
    if (!(cutoff > 0.0 && cutoff < 1.0))
        fail(ErrorCode::InvalidCutoff, "cutoff must lie in (0, 1) as a fraction of Nyquist");
    if (order < 1)
        fail(ErrorCode::InvalidConfig, "filter order must be at least 1");

    const double warped = 2.0 * std::tan(std::numbers::pi * cutoff / 2.0);
    std::vector<std::complex<double>> zpoles;
    for (int k = 1; k <= order; ++k) {
        const double theta = std::numbers::pi * (2.0 * k + order - 1) / (2.0 * order);
        const std::complex<double> s = warped * std::polar(1.0, theta);
        zpoles.push_back((2.0 + s) / (2.0 - s));
    }
    const std::vector<std::complex<double>> zzeros(static_cast<std::size_t>(order), std::complex<double>(-1.0, 0.0));

    FilterCoefficients c;
    for (const auto& v : expand_roots(zpoles))
        c.a.push_back(v.real());
    std::vector<double> bz;
    for (const auto& v : expand_roots(zzeros))
        bz.push_back(v.real());

    double sa = 0.0, sb = 0.0;
    for (double v : c.a)
        sa += v;
    for (double v : bz)
        sb += v;
    const double gain = sa / sb;
    for (double v : bz)
        c.b.push_back(v * gain);
    return c;
}

StreamingFilter::StreamingFilter(FilterCoefficients coeffs)
    : coeffs_(std::move(coeffs)), state_(coeffs_.order(), 0.0)
{
}

void StreamingFilter::prime(double x)
{
    // For constant input x the output is x (unit DC gain); solve the state backwards.
    const std::size_t n = coeffs_.order();
    double next = 0.0;
    for (std::size_t k = n; k >= 1; --k) {
        state_[k - 1] = (coeffs_.b[k] - coeffs_.a[k]) * x + next;
        next = state_[k - 1];
    }
    primed_ = true;
}

double StreamingFilter::step(double x)
{
    if (!primed_)
        prime(x);
    const std::size_t n = coeffs_.order();
    const double y = coeffs_.b[0] * x + (n > 0 ? state_[0] : 0.0);
    for (std::size_t k = 1; k <= n; ++k) {
        const double carry = k < n ? state_[k] : 0.0;
        state_[k - 1] = coeffs_.b[k] * x - coeffs_.a[k] * y + carry;
    }
    return y;
}

Series filter_apply_causal(const FilterCoefficients& coeffs, std::span<const double> series)
{
    Series out(series.size());
    StreamingFilter filter(coeffs);
    for (std::size_t t = 0; t < series.size(); ++t) {
        if (is_missing(series[t])) {
            out[t] = kMissing;
            filter.reset();
            continue;
        }
        out[t] = filter.step(series[t]);
    }
    return out;
}

Series resample_to_minutes(std::span<const Observation> observations, const MinuteGrid& grid,
                           std::optional<std::int64_t> max_age)
{
    Series out(static_cast<std::size_t>(std::max<std::int64_t>(grid.length, 0)), kMissing);
    std::size_t next = 0;
    const Observation* latest = nullptr;
    for (std::int64_t i = 0; i < grid.length; ++i) {
        const Timestamp t = grid.at(i);
        while (next < observations.size() && observations[next].time <= t)
            latest = &observations[next++];
        if (latest == nullptr)
            continue;
        if (max_age && t - latest->time >= *max_age)
            continue;
        out[static_cast<std::size_t>(i)] = latest->value;
    }
    return out;
}

Series rolling_sum(std::span<const double> series, int window)
{
    if (window < 1)
        fail(ErrorCode::InvalidConfig, "rolling window must be positive");
    const auto w = static_cast<std::size_t>(window);
    Series out(series.size(), kMissing);
    // Recompute per window: exact and immune to NaN poisoning of a running total.
    for (std::size_t t = w - 1; t < series.size(); ++t) {
        double acc = 0.0;
        bool complete = true;
        for (std::size_t k = t + 1 - w; k <= t; ++k) {
            if (is_missing(series[k])) {
                complete = false;
                break;
            }
            acc += series[k];
        }
        if (complete)
            out[t] = acc;
    }
    return out;
}

namespace {

std::optional<std::vector<std::vector<double>>> flow_lags_at(std::span<const Series> flow_rolling, std::int64_t index,
                                                             const LookbackConfig& config)
{
    std::vector<std::vector<double>> lags;
    lags.reserve(flow_rolling.size());
    for (const auto& series : flow_rolling) {
        std::vector<double> loc;
        for (int k = 0; k < config.flow_lags; ++k) {
            const std::int64_t i = index - static_cast<std::int64_t>(k) * config.flow_step;
            if (i < 0 || i >= static_cast<std::int64_t>(series.size()) || is_missing(series[static_cast<std::size_t>(i)]))
                return std::nullopt;
            loc.push_back(series[static_cast<std::size_t>(i)]);
        }
        lags.push_back(std::move(loc));
    }
    return lags;
}

}  // namespace

std::optional<LookbackWindow> build_lookbacks(std::span<const Observation> occupancy_feed,
                                              std::span<const Series> flow_rolling, const MinuteGrid& grid,
                                              Timestamp t, const LookbackConfig& config)
{
    const auto index = grid.index_of(t);
    if (!index)
        return std::nullopt;
    auto upper = std::upper_bound(occupancy_feed.begin(), occupancy_feed.end(), t,
                                  [](Timestamp value, const Observation& o) { return value < o.time; });
    const auto available = static_cast<int>(upper - occupancy_feed.begin());
    if (available < config.occupancy_lags)
        return std::nullopt;

    LookbackWindow w;
    for (int k = 0; k < config.occupancy_lags; ++k) {
        const double v = (upper - 1 - k)->value;
        if (is_missing(v))
            return std::nullopt;
        w.occupancy_lags.push_back(v);
    }
    auto flows = flow_lags_at(flow_rolling, *index, config);
    if (!flows)
        return std::nullopt;
    w.flow_lags = std::move(*flows);
    return w;
}

std::optional<LookbackWindow> build_lookbacks_anchored(std::span<const double> occupancy,
                                                       std::span<const Series> flow_rolling, std::int64_t index,
                                                       const LookbackConfig& config)
{
    LookbackWindow w;
    for (int k = 0; k < config.occupancy_lags; ++k) {
        const std::int64_t i = index - static_cast<std::int64_t>(k) * config.occupancy_cadence;
        if (i < 0 || i >= static_cast<std::int64_t>(occupancy.size()) || is_missing(occupancy[static_cast<std::size_t>(i)]))
            return std::nullopt;
        w.occupancy_lags.push_back(occupancy[static_cast<std::size_t>(i)]);
    }
    auto flows = flow_lags_at(flow_rolling, index, config);
    if (!flows)
        return std::nullopt;
    w.flow_lags = std::move(*flows);
    return w;
}

}  // namespace parkcast
