#pragma once

#include "parkcast/artifact.hpp"
#include "parkcast/error.hpp"
#include "parkcast/eval.hpp"
#include "parkcast/ingest.hpp"

#include <json.hpp>

#include <chrono>
#include <condition_variable>
#include <deque>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace parkcast {

/// Order matters: at equal timestamps feeds are applied before the tick.
enum class FeedKind { occupancy = 0, traffic = 1, weather = 2, tick = 3 };

struct FeedEvent {
    Timestamp time;
    FeedKind kind = FeedKind::tick;
    std::size_t location = 0;  // traffic only
    double value = 0.0;        // occupancy rate, flow or temperature
    double rain = 0.0;         // weather only

    bool operator==(const FeedEvent&) const = default;
};

struct ReplayConfig {
    int occupancy_cadence = 11;
    int jitter = 0;  // occupancy updates move by up to +/- jitter minutes
    std::uint64_t seed = 0;
    int traffic_cadence = 1;
    int weather_cadence = 10;
    int tick_interval = 5;
    int warmup = 120;  // minutes of feeds replayed before the window opens
    double speed = std::numeric_limits<double>::infinity();  // replay minutes per wall-clock minute

    void validate() const;
};

void to_json(nlohmann::json& j, const ReplayConfig& c);
void from_json(const nlohmann::json& j, ReplayConfig& c);

/// Feed and tick events for the window [start, end), with feeds starting
/// `warmup` minutes earlier. Occupancy update k sits at start + k*cadence plus
/// its own seeded jitter, so truncating the window never moves earlier events.
/// Throws WindowUncovered when the dataset does not cover the feeds.
std::vector<FeedEvent> replay_feeds(const Dataset& data, Timestamp start, Timestamp end, const ReplayConfig& config);

/// Sleeps so that events are delivered at `speed` times real time. Infinite
/// speed never sleeps.
class Pacer {
public:
    explicit Pacer(double speed) : speed_(speed) {}
    void wait_for(Timestamp t);

private:
    double speed_;
    std::optional<Timestamp> origin_;
    std::chrono::steady_clock::time_point wall_origin_;
};

/// Everything the live system knows, built only from events applied so far.
class FeedState {
public:
    FeedState(std::vector<std::string> location_ids, SignalConfig signal, HolidayCalendar holidays,
              int weather_max_age = 60);

    /// Events must arrive in time order.
    void apply(const FeedEvent& e);
    void advance(Timestamp clock);

    Timestamp clock() const { return clock_; }
    std::optional<Timestamp> last_occupancy_time() const;
    std::optional<std::int64_t> staleness() const;
    const std::vector<std::string>& location_ids() const { return location_ids_; }
    const SignalConfig& signal() const { return signal_; }

    /// Model inputs anchored at the last occupancy observation, or nullopt
    /// while any lookback is unfilled.
    std::optional<RawInputs> inputs() const;

private:
    struct Flow {
        StreamingFilter filter;
        std::optional<std::int64_t> last_minute;
        std::deque<std::pair<std::int64_t, double>> smoothed;  // (minute, value), oldest first
    };
    struct Weather {
        Timestamp time;
        double temperature;
        double rain;
    };

    std::optional<double> rolling_at(const Flow& f, std::int64_t minute) const;

    std::vector<std::string> location_ids_;
    SignalConfig signal_;
    HolidayCalendar holidays_;
    int weather_max_age_;
    Timestamp clock_{std::numeric_limits<std::int64_t>::min()};
    std::deque<Observation> occupancy_;  // newest first
    std::vector<Flow> flows_;
    std::deque<Weather> weather_;  // oldest first
};

inline constexpr int kMaxStaleness = 30;

/// Horizons every bundle carries.
std::vector<int> requested_horizons();  // 5, 10, ..., 60

/// Trained horizon answering request `h` at the given staleness:
/// ceil((h + staleness) / 5) * 5. Throws StaleFeed beyond 30 minutes.
int mapped_horizon(int h, std::int64_t staleness);

struct PredictionBundle {
    Timestamp issued;
    std::string garage;
    Target target = Target::occupancy;
    std::int64_t staleness = 0;
    std::vector<std::pair<int, double>> predictions;  // ascending horizon
    std::string model_digest;

    nlohmann::ordered_json to_json() const;
    static PredictionBundle from_json(const nlohmann::json& j);
    std::string to_line() const;  // compact JSON, no newline

    bool operator==(const PredictionBundle&) const = default;
};

/// Uses the trained output at `mapped_horizon(h, staleness)` for every
/// requested h, with features anchored at the last occupancy observation.
/// Occupancy values are clamped to [0, 1]; unclamped values go to `raw`.
PredictionBundle predict_now(const ModelArtifact& artifact, const FeedState& state, Timestamp clock,
                             const std::string& garage, const std::string& model_digest,
                             std::vector<double>* raw = nullptr);

class BundleSink {
public:
    virtual ~BundleSink() = default;
    virtual void write(const PredictionBundle& bundle) = 0;
    virtual void flush() {}
};

/// One JSON object per line.
class JsonlSink : public BundleSink {
public:
    explicit JsonlSink(std::ostream& out) : out_(out) {}
    void write(const PredictionBundle& bundle) override;
    void flush() override { out_.flush(); }

private:
    std::ostream& out_;
};

class CollectingSink : public BundleSink {
public:
    void write(const PredictionBundle& bundle) override { bundles.push_back(bundle); }
    std::vector<PredictionBundle> bundles;
};

/// Latest bundle per target plus feed health, safe to read from other threads.
class LatestBundles : public BundleSink {
public:
    LatestBundles();
    void write(const PredictionBundle& bundle) override;
    void set_status(Timestamp clock, std::optional<std::int64_t> staleness);

    nlohmann::ordered_json predictions_json() const;
    nlohmann::ordered_json health_json() const;

private:
    mutable std::mutex mutex_;
    std::vector<PredictionBundle> latest_;
    std::optional<Timestamp> clock_;
    std::optional<std::int64_t> staleness_;
    std::chrono::steady_clock::time_point started_;
};

enum class Overflow { drop_oldest, block };

/// Hands bundles to `downstream` on a worker thread. When the queue is full
/// the oldest queued bundle is dropped and counted, or with Overflow::block
/// the writer waits for room (unpaced replays, where nothing is late).
class QueuedSink : public BundleSink {
public:
    QueuedSink(BundleSink& downstream, std::size_t capacity, Overflow overflow = Overflow::drop_oldest);
    ~QueuedSink() override;
    QueuedSink(const QueuedSink&) = delete;
    QueuedSink& operator=(const QueuedSink&) = delete;

    void write(const PredictionBundle& bundle) override;
    /// Blocks until the queue is drained.
    void flush() override;
    void close();
    std::size_t dropped() const;

private:
    void run();

    BundleSink& downstream_;
    std::size_t capacity_;
    Overflow overflow_;
    mutable std::mutex mutex_;
    std::condition_variable cv_;
    std::condition_variable drained_;
    std::condition_variable space_;
    std::deque<PredictionBundle> queue_;
    std::size_t dropped_ = 0;
    bool busy_ = false;
    bool closed_ = false;
    std::thread worker_;
};

struct TickError {
    Timestamp time;
    Target target = Target::occupancy;
    ErrorCode code = ErrorCode::IncompleteState;
    std::string message;
};

struct ServeOptions {
    std::string garage;
    double speed = std::numeric_limits<double>::infinity();
    LatestBundles* status = nullptr;
    std::ostream* log = nullptr;
};

struct ServeSummary {
    std::size_t ticks = 0;
    std::size_t bundles = 0;
    std::vector<TickError> errors;
};

/// Applies events in order; on each tick emits one bundle per artifact to
/// every sink. Tick failures are recorded and the loop goes on. Throws
/// SchemaMismatch up front when an artifact disagrees with the feed layout.
ServeSummary serve(std::span<const ModelArtifact> artifacts, std::span<const FeedEvent> events, FeedState& state,
                   std::span<BundleSink* const> sinks, const ServeOptions& options = {});

/// Scores bundles of one target against the per-minute truth. Throws
/// CoverageGap when any issued + h falls outside the truth.
EvaluationReport realtime_evaluate(std::span<const PredictionBundle> bundles, const MinuteGrid& grid,
                                   std::span<const double> truth, const NaiveFn& naive);

/// `GET /predictions` and `GET /health` over HTTP, served from a background thread.
class HttpEndpoint {
public:
    explicit HttpEndpoint(const LatestBundles& store);
    ~HttpEndpoint();
    HttpEndpoint(const HttpEndpoint&) = delete;
    HttpEndpoint& operator=(const HttpEndpoint&) = delete;

    /// Port 0 picks a free port. Returns the bound port.
    int start(const std::string& host, int port);
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace parkcast
