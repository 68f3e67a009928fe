#pragma once

#include "parkcast/time.hpp"
#include "parkcast/util.hpp"

#include <complex>
#include <optional>
#include <span>
#include <vector>

namespace parkcast {

/// Transfer function b(z)/a(z) with a[0] == 1.
struct FilterCoefficients {
    std::vector<double> b;
    std::vector<double> a;

    std::size_t order() const { return a.size() - 1; }
    double dc_gain() const;
    std::vector<std::complex<double>> poles() const;
    /// |H(e^{j*pi*f})| for f a fraction of Nyquist.
    double magnitude(double f) const;
};

/// Low-pass Butterworth via analog prototype, tangent prewarp and bilinear
/// transform. `cutoff` is a fraction of the Nyquist frequency, in (0, 1).
FilterCoefficients butterworth_design(int order, double cutoff);

/// Streaming transposed direct-form II section. The first sample seen primes
/// the state to the steady state of a constant input equal to that sample.
class StreamingFilter {
public:
    explicit StreamingFilter(FilterCoefficients coeffs);

    double step(double x);
    void reset() { primed_ = false; }
    bool primed() const { return primed_; }

private:
    void prime(double x);

    FilterCoefficients coeffs_;
    std::vector<double> state_;
    bool primed_ = false;
};

/// Causal single-pass filtering. Missing samples pass through as missing and
/// restart the filter (steady-state primed) at the next present sample.
Series filter_apply_causal(const FilterCoefficients& coeffs, std::span<const double> series);

struct Observation {
    Timestamp time;
    double value = 0.0;
};

/// Step-hold: each grid minute takes the latest observation at or before it.
/// Observations older than `max_age` minutes count as missing.
Series resample_to_minutes(std::span<const Observation> observations, const MinuteGrid& grid,
                           std::optional<std::int64_t> max_age = std::nullopt);

/// y[t] = x[t-window+1] + ... + x[t]; the first window-1 entries (or any
/// window containing a missing value) are missing.
Series rolling_sum(std::span<const double> series, int window = 10);

struct LookbackConfig {
    int occupancy_lags = 5;
    int occupancy_cadence = 11;  // minutes between occupancy feed updates
    int flow_lags = 3;
    int flow_step = 10;          // minutes between flow rolling-sum lags
};

/// Lag values newest-first.
struct LookbackWindow {
    std::vector<double> occupancy_lags;
    std::vector<std::vector<double>> flow_lags;  // [location][lag]
};

/// Builds the lookback at `t` from an occupancy feed (time-sorted updates) and
/// per-location rolling flow sums on `grid`. Returns nullopt when the row is
/// incomplete.
std::optional<LookbackWindow> build_lookbacks(std::span<const Observation> occupancy_feed,
                                              std::span<const Series> flow_rolling, const MinuteGrid& grid,
                                              Timestamp t, const LookbackConfig& config = {});

/// Offline variant anchored at an occupancy update at row `index`: occupancy
/// lags are read at index, index - cadence, ... from the per-minute series.
std::optional<LookbackWindow> build_lookbacks_anchored(std::span<const double> occupancy,
                                                       std::span<const Series> flow_rolling, std::int64_t index,
                                                       const LookbackConfig& config = {});

}  // namespace parkcast
