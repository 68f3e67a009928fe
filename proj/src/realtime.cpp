#include "parkcast/realtime.hpp"

#include "parkcast/error.hpp"

#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace parkcast {

void ReplayConfig::validate() const
{
    std::vector<std::string> problems;
    if (occupancy_cadence < 1)
        problems.push_back("occupancy_cadence must be >= 1");
    if (jitter < 0 || 2 * jitter >= occupancy_cadence)
        problems.push_back("jitter must be in [0, occupancy_cadence / 2)");
    if (traffic_cadence < 1)
        problems.push_back("traffic_cadence must be >= 1");
    if (weather_cadence < 1)
        problems.push_back("weather_cadence must be >= 1");
    if (tick_interval < 1)
        problems.push_back("tick_interval must be >= 1");
    if (warmup < 0)
        problems.push_back("warmup must be >= 0");
    if (!(speed > 0.0))
        problems.push_back("speed must be positive");
    if (!problems.empty()) {
        std::string msg = "invalid replay config:";
        for (const auto& p : problems)
            msg += " " + p + ";";
        fail(ErrorCode::InvalidConfig, msg);
    }
}

void to_json(nlohmann::json& j, const ReplayConfig& c)
{
    j = nlohmann::json{{"occupancy_cadence", c.occupancy_cadence},
                       {"jitter", c.jitter},
                       {"seed", c.seed},
                       {"traffic_cadence", c.traffic_cadence},
                       {"weather_cadence", c.weather_cadence},
                       {"tick_interval", c.tick_interval},
                       {"warmup", c.warmup}};
    // JSON has no infinity; absent or null speed means as fast as possible.
    if (std::isfinite(c.speed))
        j["speed"] = c.speed;
    else
        j["speed"] = nullptr;
}

void from_json(const nlohmann::json& j, ReplayConfig& c)
{
    c.occupancy_cadence = j.value("occupancy_cadence", c.occupancy_cadence);
    c.jitter = j.value("jitter", c.jitter);
    c.seed = j.value("seed", c.seed);
    c.traffic_cadence = j.value("traffic_cadence", c.traffic_cadence);
    c.weather_cadence = j.value("weather_cadence", c.weather_cadence);
    c.tick_interval = j.value("tick_interval", c.tick_interval);
    c.warmup = j.value("warmup", c.warmup);
    if (j.contains("speed") && !j.at("speed").is_null())
        c.speed = j.at("speed").get<double>();
}

namespace {

std::int64_t positive_mod(std::int64_t a, std::int64_t m)
{
    return ((a % m) + m) % m;
}

}  // namespace

std::vector<FeedEvent> replay_feeds(const Dataset& data, Timestamp start, Timestamp end, const ReplayConfig& config)
{
    config.validate();
    if (!(start < end))
        fail(ErrorCode::WindowUncovered, "replay window is empty");
    const Timestamp feed_start = start - config.warmup;
    if (feed_start < data.grid.start || end > data.grid.end())
        fail(ErrorCode::WindowUncovered, "dataset covers " + format_iso8601(data.grid.start) + " to " +
                                             format_iso8601(data.grid.end()) + ", replay needs " +
                                             format_iso8601(feed_start) + " to " + format_iso8601(end));

    std::vector<FeedEvent> events;
    const auto at = [&](Timestamp t) { return static_cast<std::size_t>(*data.grid.index_of(t)); };

    const std::int64_t cadence = config.occupancy_cadence;
    const std::int64_t first_k = -((config.warmup + config.jitter + cadence - 1) / cadence);
    for (std::int64_t k = first_k;; ++k) {
        const Timestamp base = start + k * cadence;
        if (base - config.jitter >= end)
            break;
        std::int64_t shift = 0;
        if (config.jitter > 0) {
            const auto r = derive_seed(config.seed, static_cast<std::uint64_t>(k));
            shift = static_cast<std::int64_t>(r % static_cast<std::uint64_t>(2 * config.jitter + 1)) - config.jitter;
        }
        const Timestamp t = base + shift;
        if (t < feed_start || t >= end)
            continue;
        const double v = data.garage.occupancy_rate[at(t)];
        if (!is_missing(v))
            events.push_back({t, FeedKind::occupancy, 0, v, 0.0});
    }

    const auto& flows = data.exogenous.traffic_flow;
    for (Timestamp t = feed_start; t < end; t = t + 1) {
        const std::size_t i = at(t);
        // Sensors report on the wall clock, not relative to the replay window.
        if (positive_mod(t.minutes, config.traffic_cadence) == 0) {
            for (std::size_t loc = 0; loc < flows.size(); ++loc)
                if (!is_missing(flows[loc][i]))
                    events.push_back({t, FeedKind::traffic, loc, flows[loc][i], 0.0});
        }
        if (positive_mod(t.minutes, config.weather_cadence) == 0) {
            const double temp = data.exogenous.temperature[i];
            const double rain = data.exogenous.rain[i];
            if (!is_missing(temp) && !is_missing(rain))
                events.push_back({t, FeedKind::weather, 0, temp, rain});
        }
    }

    for (Timestamp t = start; t < end; t = t + config.tick_interval)
        events.push_back({t, FeedKind::tick, 0, 0.0, 0.0});

    std::stable_sort(events.begin(), events.end(), [](const FeedEvent& a, const FeedEvent& b) {
        if (a.time != b.time)
            return a.time < b.time;
        if (a.kind != b.kind)
            return a.kind < b.kind;
        return a.location < b.location;
    });
    return events;
}

void Pacer::wait_for(Timestamp t)
{
    if (!std::isfinite(speed_))
        return;
    const auto now = std::chrono::steady_clock::now();
    if (!origin_) {
        origin_ = t;
        wall_origin_ = now;
        return;
    }
    const double seconds = static_cast<double>((t - *origin_)) * 60.0 / speed_;
    std::this_thread::sleep_until(wall_origin_ + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                                     std::chrono::duration<double>(seconds)));
}

// --- feed state --------------------------------------------------------------

namespace {

constexpr std::int64_t kFlowHistoryMinutes = 240;

}  // namespace

FeedState::FeedState(std::vector<std::string> location_ids, SignalConfig signal, HolidayCalendar holidays,
                     int weather_max_age)
    : location_ids_(std::move(location_ids)),
      signal_(signal),
      holidays_(std::move(holidays)),
      weather_max_age_(weather_max_age)
{
    const auto coeffs = butterworth_design(signal_.filter_order, signal_.cutoff);
    for (std::size_t i = 0; i < location_ids_.size(); ++i)
        flows_.push_back(Flow{StreamingFilter(coeffs), std::nullopt, {}});
}

void FeedState::apply(const FeedEvent& e)
{
    if (e.time < clock_)
        fail(ErrorCode::InvalidConfig, "feed event at " + format_iso8601(e.time) + " arrived after " +
                                           format_iso8601(clock_));
    clock_ = e.time;
    switch (e.kind) {
    case FeedKind::occupancy:
        occupancy_.push_front({e.time, e.value});
        while (occupancy_.size() > static_cast<std::size_t>(signal_.lookback.occupancy_lags))
            occupancy_.pop_back();
        break;
    case FeedKind::traffic: {
        if (e.location >= flows_.size())
            fail(ErrorCode::ShapeMismatch, "traffic event for unknown location index " + std::to_string(e.location));
        Flow& f = flows_[e.location];
        const std::int64_t m = e.time.minutes;
        if (f.last_minute && m <= *f.last_minute)
            break;
        // A gap restarts the filter, exactly as a missing minute does offline.
        if (f.last_minute && m != *f.last_minute + 1)
            f.filter.reset();
        f.last_minute = m;
        if (is_missing(e.value)) {
            f.filter.reset();
            break;
        }
        f.smoothed.emplace_back(m, f.filter.step(e.value));
        while (!f.smoothed.empty() && f.smoothed.front().first <= m - kFlowHistoryMinutes)
            f.smoothed.pop_front();
        break;
    }
    case FeedKind::weather:
        weather_.push_back({e.time, e.value, e.rain});
        while (!weather_.empty() && weather_.front().time.minutes <= e.time.minutes - kFlowHistoryMinutes)
            weather_.pop_front();
        break;
    case FeedKind::tick:
        break;
    }
}

void FeedState::advance(Timestamp clock)
{
    if (clock < clock_)
        fail(ErrorCode::InvalidConfig, "clock cannot move backwards");
    clock_ = clock;
}

std::optional<Timestamp> FeedState::last_occupancy_time() const
{
    if (occupancy_.empty())
        return std::nullopt;
    return occupancy_.front().time;
}

std::optional<std::int64_t> FeedState::staleness() const
{
    const auto t0 = last_occupancy_time();
    if (!t0)
        return std::nullopt;
    return (clock_ - *t0);
}

std::optional<double> FeedState::rolling_at(const Flow& f, std::int64_t minute) const
{
    const auto w = static_cast<std::size_t>(signal_.rolling_window);
    auto it = std::lower_bound(f.smoothed.begin(), f.smoothed.end(), minute,
                               [](const auto& p, std::int64_t m) { return p.first < m; });
    if (it == f.smoothed.end() || it->first != minute)
        return std::nullopt;
    const auto last = static_cast<std::size_t>(it - f.smoothed.begin());
    if (last + 1 < w)
        return std::nullopt;
    const std::size_t first = last + 1 - w;
    // Minutes are strictly increasing, so matching endpoints means no gaps.
    if (f.smoothed[first].first != minute - static_cast<std::int64_t>(w) + 1)
        return std::nullopt;
    double acc = 0.0;
    for (std::size_t k = first; k <= last; ++k)
        acc += f.smoothed[k].second;
    return acc;
}

std::optional<RawInputs> FeedState::inputs() const
{
    const auto& lb = signal_.lookback;
    if (occupancy_.size() < static_cast<std::size_t>(lb.occupancy_lags))
        return std::nullopt;
    RawInputs in;
    in.t = occupancy_.front().time;
    for (const auto& o : occupancy_)
        in.lookback.occupancy_lags.push_back(o.value);

    for (const auto& f : flows_) {
        std::vector<double> lags;
        for (int k = 0; k < lb.flow_lags; ++k) {
            const auto v = rolling_at(f, in.t.minutes - static_cast<std::int64_t>(k) * lb.flow_step);
            if (!v)
                return std::nullopt;
            lags.push_back(*v);
        }
        in.lookback.flow_lags.push_back(std::move(lags));
    }

    const Weather* w = nullptr;
    for (const auto& x : weather_)
        if (x.time <= in.t)
            w = &x;
    if (!w || (in.t - w->time) >= weather_max_age_)  // same cutoff as the offline resampling
        return std::nullopt;
    in.temperature = w->temperature;
    in.rain = w->rain;
    in.holiday = holidays_.is_holiday(in.t) ? 1.0 : 0.0;
    return in;
}

// --- prediction --------------------------------------------------------------

std::vector<int> requested_horizons()
{
    std::vector<int> h;
    for (int m = 5; m <= 60; m += 5)
        h.push_back(m);
    return h;
}

int mapped_horizon(int h, std::int64_t staleness)
{
    if (staleness < 0)
        fail(ErrorCode::InvalidConfig, "staleness cannot be negative");
    if (staleness > kMaxStaleness)
        fail(ErrorCode::StaleFeed, "last occupancy update is " + std::to_string(staleness) +
                                       " min old, limit is " + std::to_string(kMaxStaleness));
    const std::int64_t lead = h + staleness;
    return static_cast<int>((lead + 4) / 5 * 5);
}

nlohmann::ordered_json PredictionBundle::to_json() const
{
    nlohmann::ordered_json preds = nlohmann::ordered_json::object();
    for (const auto& [h, v] : predictions)
        preds[std::to_string(h)] = v;
    nlohmann::ordered_json j;
    j["issued"] = format_iso8601(issued);
    j["garage"] = garage;
    j["target"] = std::string(to_string(target));
    j["staleness_min"] = staleness;
    j["predictions"] = std::move(preds);
    j["model_digest"] = model_digest;
    return j;
}

PredictionBundle PredictionBundle::from_json(const nlohmann::json& j)
{
    PredictionBundle b;
    try {
        const auto issued = parse_iso8601(j.at("issued").get<std::string>());
        if (!issued)
            fail(ErrorCode::SchemaMismatch, "bundle issue time is not ISO 8601");
        b.issued = *issued;
        b.garage = j.at("garage").get<std::string>();
        const auto target = parse_target(j.at("target").get<std::string>());
        if (!target)
            fail(ErrorCode::SchemaMismatch, "unknown bundle target");
        b.target = *target;
        b.staleness = j.at("staleness_min").get<std::int64_t>();
        b.model_digest = j.at("model_digest").get<std::string>();
        for (const auto& [key, value] : j.at("predictions").items())
            b.predictions.emplace_back(std::stoi(key), value.get<double>());
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::SchemaMismatch, std::string("malformed bundle: ") + e.what());
    } catch (const std::logic_error& e) {
        fail(ErrorCode::SchemaMismatch, std::string("malformed bundle: ") + e.what());
    }
    std::sort(b.predictions.begin(), b.predictions.end());
    std::vector<int> keys;
    for (const auto& [h, v] : b.predictions) {
        keys.push_back(h);
        if (!std::isfinite(v))
            fail(ErrorCode::SchemaMismatch, "bundle holds a non-finite prediction");
    }
    if (keys != requested_horizons())
        fail(ErrorCode::SchemaMismatch, "bundle horizons must be exactly 5..60 in steps of 5");
    return b;
}

std::string PredictionBundle::to_line() const
{
    return to_json().dump();
}

PredictionBundle predict_now(const ModelArtifact& artifact, const FeedState& state, Timestamp clock,
                             const std::string& garage, const std::string& model_digest, std::vector<double>* raw)
{
    const auto t0 = state.last_occupancy_time();
    if (!t0)
        fail(ErrorCode::IncompleteState, "no occupancy observation yet");
    if (clock < state.clock())
        fail(ErrorCode::InvalidConfig, "prediction clock is behind the feed state");
    const std::int64_t staleness = (clock - *t0);
    if (staleness > kMaxStaleness)
        mapped_horizon(5, staleness);  // throws StaleFeed
    const auto inputs = state.inputs();
    if (!inputs)
        fail(ErrorCode::IncompleteState, "lookbacks not yet filled");

    const FeatureVector x = artifact.schema.apply(raw_feature_values(*inputs));
    const std::vector<double> out = artifact.predict(x);
    const auto& trained = artifact.horizons.minutes;

    PredictionBundle b;
    b.issued = clock;
    b.garage = garage;
    b.target = artifact.target;
    b.staleness = staleness;
    b.model_digest = model_digest;
    if (raw)
        raw->clear();
    for (int h : requested_horizons()) {
        const int hp = mapped_horizon(h, staleness);
        const auto it = std::find(trained.begin(), trained.end(), hp);
        if (it == trained.end())
            fail(ErrorCode::ShapeMismatch, "artifact has no trained horizon " + std::to_string(hp));
        double v = out[static_cast<std::size_t>(it - trained.begin())];
        if (!std::isfinite(v))
            fail(ErrorCode::Divergence, "model produced a non-finite prediction");
        if (raw)
            raw->push_back(v);
        if (artifact.target == Target::occupancy)
            v = std::clamp(v, 0.0, 1.0);
        b.predictions.emplace_back(h, v);
    }
    return b;
}

// --- sinks -------------------------------------------------------------------

void JsonlSink::write(const PredictionBundle& bundle)
{
    out_ << bundle.to_line() << '\n';
}

LatestBundles::LatestBundles() : started_(std::chrono::steady_clock::now()) {}

void LatestBundles::write(const PredictionBundle& bundle)
{
    std::lock_guard lock(mutex_);
    auto it = std::find_if(latest_.begin(), latest_.end(), [&](const auto& b) { return b.target == bundle.target; });
    if (it == latest_.end())
        latest_.push_back(bundle);
    else
        *it = bundle;
    std::sort(latest_.begin(), latest_.end(), [](const auto& a, const auto& b) { return a.target < b.target; });
}

void LatestBundles::set_status(Timestamp clock, std::optional<std::int64_t> staleness)
{
    std::lock_guard lock(mutex_);
    clock_ = clock;
    staleness_ = staleness;
}

nlohmann::ordered_json LatestBundles::predictions_json() const
{
    std::lock_guard lock(mutex_);
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& b : latest_)
        arr.push_back(b.to_json());
    return arr;
}

nlohmann::ordered_json LatestBundles::health_json() const
{
    std::lock_guard lock(mutex_);
    nlohmann::ordered_json j;
    const bool stale = !staleness_ || *staleness_ > kMaxStaleness;
    j["status"] = clock_ ? (stale ? "stale" : "ok") : "starting";
    j["clock"] = clock_ ? nlohmann::ordered_json(format_iso8601(*clock_)) : nlohmann::ordered_json(nullptr);
    j["staleness_min"] = staleness_ ? nlohmann::ordered_json(*staleness_) : nlohmann::ordered_json(nullptr);
    j["uptime_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
    return j;
}

QueuedSink::QueuedSink(BundleSink& downstream, std::size_t capacity, Overflow overflow)
    : downstream_(downstream),
      capacity_(std::max<std::size_t>(capacity, 1)),
      overflow_(overflow),
      worker_([this] { run(); })
{
}

QueuedSink::~QueuedSink()
{
    close();
}

void QueuedSink::write(const PredictionBundle& bundle)
{
    {
        std::unique_lock lock(mutex_);
        if (overflow_ == Overflow::block)
            space_.wait(lock, [this] { return closed_ || queue_.size() < capacity_; });
        if (closed_)
            fail(ErrorCode::IoError, "queued sink is closed");
        if (queue_.size() >= capacity_) {
            queue_.pop_front();
            ++dropped_;
        }
        queue_.push_back(bundle);
    }
    cv_.notify_one();
}

void QueuedSink::flush()
{
    std::unique_lock lock(mutex_);
    drained_.wait(lock, [this] { return queue_.empty() && !busy_; });
    lock.unlock();
    downstream_.flush();
}

void QueuedSink::close()
{
    {
        std::lock_guard lock(mutex_);
        if (closed_)
            return;
        closed_ = true;
    }
    cv_.notify_all();
    space_.notify_all();
    if (worker_.joinable())
        worker_.join();
    downstream_.flush();
}

std::size_t QueuedSink::dropped() const
{
    std::lock_guard lock(mutex_);
    return dropped_;
}

void QueuedSink::run()
{
    std::unique_lock lock(mutex_);
    for (;;) {
        cv_.wait(lock, [this] { return closed_ || !queue_.empty(); });
        if (queue_.empty()) {
            if (closed_)
                return;
            continue;
        }
        PredictionBundle b = std::move(queue_.front());
        queue_.pop_front();
        busy_ = true;
        space_.notify_one();
        lock.unlock();
        downstream_.write(b);
        lock.lock();
        busy_ = false;
        if (queue_.empty())
            drained_.notify_all();
    }
}

// --- serve loop --------------------------------------------------------------

namespace {

bool same_lookback(const LookbackConfig& a, const LookbackConfig& b)
{
    return a.occupancy_lags == b.occupancy_lags && a.occupancy_cadence == b.occupancy_cadence &&
           a.flow_lags == b.flow_lags && a.flow_step == b.flow_step;
}

}  // namespace

ServeSummary serve(std::span<const ModelArtifact> artifacts, std::span<const FeedEvent> events, FeedState& state,
                   std::span<BundleSink* const> sinks, const ServeOptions& options)
{
    std::vector<std::string> digests;
    for (const auto& a : artifacts) {
        if (a.schema.location_ids() != state.location_ids() ||
            !same_lookback(a.schema.lookback(), state.signal().lookback))
            fail(ErrorCode::SchemaMismatch, std::string("artifact for ") + std::string(to_string(a.target)) +
                                                " does not match the feed layout");
        digests.push_back(a.digest());
    }

    ServeSummary summary;
    Pacer pacer(options.speed);
    for (const auto& e : events) {
        pacer.wait_for(e.time);
        if (e.kind != FeedKind::tick) {
            state.apply(e);
            continue;
        }
        state.advance(e.time);
        ++summary.ticks;
        if (options.status)
            options.status->set_status(e.time, state.staleness());
        for (std::size_t i = 0; i < artifacts.size(); ++i) {
            try {
                const auto bundle = predict_now(artifacts[i], state, e.time, options.garage, digests[i]);
                for (auto* sink : sinks)
                    sink->write(bundle);
                ++summary.bundles;
            } catch (const Error& err) {
                summary.errors.push_back({e.time, artifacts[i].target, err.code(), err.what()});
                if (options.log)
                    *options.log << format_iso8601(e.time) << ' ' << to_string(artifacts[i].target) << ' '
                                 << to_string(err.code()) << ": " << err.what() << '\n';
            }
        }
    }
    for (auto* sink : sinks)
        sink->flush();
    return summary;
}

EvaluationReport realtime_evaluate(std::span<const PredictionBundle> bundles, const MinuteGrid& grid,
                                   std::span<const double> truth, const NaiveFn& naive)
{
    if (bundles.empty())
        fail(ErrorCode::EmptyInput, "no bundles to evaluate");
    if (truth.size() != static_cast<std::size_t>(grid.length))
        fail(ErrorCode::ShapeMismatch, "truth series does not match its grid");
    const Target target = bundles.front().target;
    std::vector<PredictionRecord> records;
    for (const auto& b : bundles) {
        if (b.target != target)
            fail(ErrorCode::ShapeMismatch, "bundles mix targets");
        for (const auto& [h, v] : b.predictions) {
            const Timestamp at = b.issued + h;
            if (!grid.contains(at) || is_missing(truth[static_cast<std::size_t>(*grid.index_of(at))]))
                fail(ErrorCode::CoverageGap, "no ground truth at " + format_iso8601(at));
            records.push_back({b.issued, h, v, truth[static_cast<std::size_t>(*grid.index_of(at))], naive(b.issued, h)});
        }
    }
    const auto horizons = requested_horizons();
    return evaluate_records(records, horizons, std::string(to_string(target)), "realtime");
}

// --- HTTP --------------------------------------------------------------------

struct HttpEndpoint::Impl {
    explicit Impl(const LatestBundles& s) : store(s) {}
    const LatestBundles& store;
    httplib::Server server;
    std::thread thread;
};

HttpEndpoint::HttpEndpoint(const LatestBundles& store) : impl_(std::make_unique<Impl>(store)) {}

HttpEndpoint::~HttpEndpoint()
{
    stop();
}

int HttpEndpoint::start(const std::string& host, int port)
{
    auto& s = impl_->server;
    const LatestBundles& store = impl_->store;
    s.Get("/predictions", [&store](const httplib::Request&, httplib::Response& res) {
        res.set_content(store.predictions_json().dump(), "application/json");
    });
    s.Get("/health", [&store](const httplib::Request&, httplib::Response& res) {
        res.set_content(store.health_json().dump(), "application/json");
    });
    int bound = port;
    if (port == 0)
        bound = s.bind_to_any_port(host);
    else if (!s.bind_to_port(host, port))
        bound = -1;
    if (bound < 0)
        fail(ErrorCode::IoError, "cannot bind " + host + ":" + std::to_string(port));
    impl_->thread = std::thread([&s] { s.listen_after_bind(); });
    s.wait_until_ready();
    return bound;
}

void HttpEndpoint::stop()
{
    if (!impl_)
        return;
    impl_->server.stop();
    if (impl_->thread.joinable())
        impl_->thread.join();
}

}  // namespace parkcast
