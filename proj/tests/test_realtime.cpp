#include "helpers.hpp"

#include "parkcast/error.hpp"
#include "parkcast/realtime.hpp"

#include <doctest.h>
#include <httplib.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <tuple>

using namespace parkcast;
using doctest::Approx;

namespace {

struct Fixture {
    Dataset dataset;
    PreparedData data;
    std::vector<ModelArtifact> artifacts;

    Fixture()
    {
        const auto city = generate_synthetic_city(testutil::small_city(21, 31, 2));
        dataset = testutil::dataset_of(city);
        data = prepare_data(dataset, SignalConfig{}, SplitSpec{});
        for (Target t : kAllTargets) {
            const auto sets = build_target_sets(data, data.schema, t, HorizonGrid::standard(), 10, 5);
            artifacts.push_back(
                train_artifact(ModelKind::forest, sets.train, sets.validation, data.schema, testutil::quick_models()));
        }
    }

    FeedState fresh_state() const
    {
        return FeedState(dataset.exogenous.location_ids, data.frame.config, holidays_of(dataset));
    }

    // A window in the test period, starting on the hour.
    Timestamp window_start() const { return data.frame.grid.at(data.split.test.front() + 600); }
};

Fixture& fixture()
{
    static Fixture f;
    return f;
}

ErrorCode code_of(auto&& fn)
{
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::IoError;
}

std::vector<PredictionBundle> run(const std::vector<FeedEvent>& events, ServeSummary* summary = nullptr,
                                  std::span<const ModelArtifact> artifacts = {})
{
    auto& f = fixture();
    if (artifacts.empty())
        artifacts = f.artifacts;
    auto state = f.fresh_state();
    CollectingSink sink;
    BundleSink* sinks[] = {&sink};
    ServeOptions opts;
    opts.garage = "centraal";
    const auto s = serve(artifacts, events, state, sinks, opts);
    if (summary)
        *summary = s;
    return sink.bundles;
}

PredictionBundle sample_bundle(Timestamp issued, double base = 0.5)
{
    PredictionBundle b;
    b.issued = issued;
    b.garage = "centraal";
    b.target = Target::occupancy;
    b.staleness = 3;
    b.model_digest = "abc";
    for (int h : requested_horizons())
        b.predictions.emplace_back(h, base + h / 1000.0);
    return b;
}

}  // namespace

TEST_CASE("occupancy feed follows its cadence and ticks follow theirs")
{
    auto& f = fixture();
    const Timestamp start = f.window_start();
    ReplayConfig cfg;
    cfg.warmup = 0;
    const auto events = replay_feeds(f.dataset, start, start + 60, cfg);
    std::vector<std::int64_t> occ, ticks;
    for (const auto& e : events) {
        if (e.kind == FeedKind::occupancy) {
            occ.push_back(e.time - start);
            CHECK(e.value == f.dataset.garage.occupancy_rate[static_cast<std::size_t>(e.time - f.dataset.grid.start)]);
        }
        if (e.kind == FeedKind::tick)
            ticks.push_back(e.time - start);
    }
    CHECK(occ == std::vector<std::int64_t>{0, 11, 22, 33, 44, 55});
    CHECK(ticks == std::vector<std::int64_t>{0, 5, 10, 15, 20, 25, 30, 35, 40, 45, 50, 55});
    CHECK(std::is_sorted(events.begin(), events.end(), [](const auto& a, const auto& b) {
        return a.time < b.time || (a.time == b.time && a.kind < b.kind);
    }));

    CHECK(code_of([&] { replay_feeds(f.dataset, f.dataset.grid.start + 10, f.dataset.grid.start + 100, ReplayConfig{}); }) ==
          ErrorCode::WindowUncovered);
    CHECK(code_of([&] { replay_feeds(f.dataset, start, f.dataset.grid.end() + 1, cfg); }) ==
          ErrorCode::WindowUncovered);
    ReplayConfig bad;
    bad.jitter = 6;
    CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("jitter is seeded and stays within bounds")
{
    auto& f = fixture();
    const Timestamp start = f.window_start();
    ReplayConfig cfg;
    cfg.jitter = 3;
    cfg.seed = 77;
    const auto a = replay_feeds(f.dataset, start, start + 600, cfg);
    const auto b = replay_feeds(f.dataset, start, start + 600, cfg);
    CHECK(a == b);
    std::vector<Timestamp> times;
    for (const auto& e : a)
        if (e.kind == FeedKind::occupancy)
            times.push_back(e.time);
    bool moved = false;
    for (const auto& t : times) {
        const auto off = (((t - start) % 11) + 11) % 11;
        const auto centred = off > 5 ? off - 11 : off;
        CHECK(std::abs(centred) <= 3);
        moved |= centred != 0;
    }
    CHECK(moved);
    cfg.seed = 78;
    CHECK(replay_feeds(f.dataset, start, start + 600, cfg) != a);
}

TEST_CASE("pacing does not change what is emitted")
{
    auto& f = fixture();
    const Timestamp start = f.window_start();
    ReplayConfig cfg;
    const auto events = replay_feeds(f.dataset, start, start + 30, cfg);
    const auto fast = run(events);

    auto state = f.fresh_state();
    CollectingSink sink;
    BundleSink* sinks[] = {&sink};
    ServeOptions opts;
    opts.garage = "centraal";
    opts.speed = 60.0 * 600.0;  // 150 replay minutes in 15 s would be too slow; this is 0.25 s
    serve(f.artifacts, events, state, sinks, opts);
    CHECK(sink.bundles == fast);
}

TEST_CASE("horizon mapping under staleness")
{
    for (std::int64_t s = 0; s <= kMaxStaleness; ++s)
        for (int h : requested_horizons()) {
            const int hp = mapped_horizon(h, s);
            CHECK(hp == static_cast<int>(std::ceil((h + s) / 5.0) * 5));
            CHECK(hp % 5 == 0);
            CHECK(hp >= h + s);
            CHECK(hp < h + s + 5);
            CHECK(hp <= 90);
        }
    CHECK(mapped_horizon(60, 30) == 90);
    CHECK(mapped_horizon(5, 1) == 10);
    CHECK(code_of([] { mapped_horizon(5, 31); }) == ErrorCode::StaleFeed);
    CHECK(requested_horizons().size() == 12);
}

TEST_CASE("live inputs match the offline encoding at update instants")
{
    auto& f = fixture();
    const Timestamp start = f.window_start();
    // The live flow filter starts at the beginning of the warmup; its start-up
    // transient decays by roughly exp(-0.056) per minute at the default cutoff.
    for (auto [warmup, tolerance] : {std::pair{120, 1e-3}, std::pair{360, 1e-7}}) {
        ReplayConfig cfg;
        cfg.warmup = warmup;
        const auto events = replay_feeds(f.dataset, start, start + 120, cfg);
        auto state = f.fresh_state();
        int compared = 0;
        for (const auto& e : events) {
            state.apply(e);
            if (e.kind != FeedKind::occupancy || e.time < start)
                continue;
            // Feeds of the same minute sort after the occupancy update; apply them first.
            auto copy = state;
            for (const auto& later : events)
                if (later.time == e.time && (later.kind == FeedKind::traffic || later.kind == FeedKind::weather))
                    copy.apply(later);
            const auto live = copy.inputs();
            const auto offline = raw_inputs_at(f.data.frame, e.time - f.data.frame.grid.start);
            REQUIRE(live);
            REQUIRE(offline);
            const auto a = raw_feature_values(*live);
            const auto b = raw_feature_values(*offline);
            REQUIRE(a.size() == b.size());
            for (std::size_t k = 0; k < a.size(); ++k)
                CHECK(a[k] == Approx(b[k]).epsilon(tolerance).scale(1.0));
            ++compared;
        }
        CHECK(compared == 11);
    }
}

TEST_CASE("an hour of replay yields twelve bundles per target")
{
    auto& f = fixture();
    const Timestamp start = f.window_start();
    ServeSummary summary;
    const auto bundles = run(replay_feeds(f.dataset, start, start + 60, ReplayConfig{}), &summary);
    CHECK(summary.ticks == 12);
    CHECK(summary.errors.empty());
    CHECK(bundles.size() == 36);
    for (Target t : kAllTargets) {
        const auto n = std::count_if(bundles.begin(), bundles.end(), [t](const auto& b) { return b.target == t; });
        CHECK(n == 12);
    }
    for (const auto& b : bundles) {
        CHECK(b.staleness >= 0);
        CHECK(b.staleness < 11);
        CHECK(b.predictions.size() == 12);
        if (b.target == Target::occupancy)
            for (const auto& [h, v] : b.predictions) {
                CHECK(v >= 0.0);
                CHECK(v <= 1.0);
            }
    }
}

TEST_CASE("bundles use the trained output at the shifted horizon")
{
    auto& f = fixture();
    const Timestamp start = f.window_start();
    const auto events = replay_feeds(f.dataset, start, start + 60, ReplayConfig{});
    auto state = f.fresh_state();
    const auto& art = f.artifacts[1];  // influx
    for (const auto& e : events) {
        if (e.kind != FeedKind::tick) {
            state.apply(e);
            continue;
        }
        state.advance(e.time);
        const auto b = predict_now(art, state, e.time, "g", "d");
        const auto x = art.schema.apply(raw_feature_values(*state.inputs()));
        const auto out = art.predict(x);
        const auto s = e.time - *state.last_occupancy_time();
        CHECK(b.staleness == s);
        for (const auto& [h, v] : b.predictions)
            CHECK(v == out[static_cast<std::size_t>(mapped_horizon(h, s) / 5 - 1)]);
    }
}

TEST_CASE("a feed dropout turns stale and recovers")
{
    auto& f = fixture();
    const Timestamp start = f.window_start();
    auto events = replay_feeds(f.dataset, start, start + 120, ReplayConfig{});
    // Updates at 11, 22 and 33 are lost: 44 minutes without news after 0.
    std::erase_if(events, [&](const FeedEvent& e) {
        return e.kind == FeedKind::occupancy && e.time >= start + 5 && e.time < start + 44;
    });
    ServeSummary summary;
    const auto bundles = run(events, &summary);
    std::vector<std::int64_t> stale_ticks;
    for (const auto& err : summary.errors) {
        CHECK(err.code == ErrorCode::StaleFeed);
        if (err.target == Target::occupancy)
            stale_ticks.push_back(err.time - start);
    }
    CHECK(stale_ticks == std::vector<std::int64_t>{35, 40});
    // Back at 44: the tick at 45 is served again, with a staleness of 1.
    const auto it = std::find_if(bundles.begin(), bundles.end(), [&](const auto& b) { return b.issued == start + 45; });
    REQUIRE(it != bundles.end());
    CHECK(it->staleness == 1);
    const auto at30 = std::find_if(bundles.begin(), bundles.end(), [&](const auto& b) { return b.issued == start + 30; });
    REQUIRE(at30 != bundles.end());
    CHECK(at30->staleness == 30);
    CHECK(at30->predictions.back().first == 60);
}

TEST_CASE("missing lookbacks report an incomplete state")
{
    auto& f = fixture();
    const Timestamp start = f.window_start();
    ReplayConfig cfg;
    cfg.warmup = 0;
    ServeSummary summary;
    const auto bundles = run(replay_feeds(f.dataset, start, start + 60, cfg), &summary);
    CHECK_FALSE(summary.errors.empty());
    for (const auto& e : summary.errors)
        CHECK(e.code == ErrorCode::IncompleteState);
    // Five updates take 44 minutes to gather.
    for (const auto& b : bundles)
        CHECK(b.issued >= start + 45);
}

TEST_CASE("weather older than an hour counts as missing, like offline")
{
    const Timestamp w0 = from_civil(2019, 3, 4, 8);
    auto inputs_with_anchor = [&](int anchor) {
        FeedState state({"L01"}, SignalConfig{}, HolidayCalendar{});
        std::vector<FeedEvent> events;
        events.push_back({w0, FeedKind::weather, 0, 120.0, 0.0});
        for (int m = 0; m <= anchor; ++m)
            events.push_back({w0 + m, FeedKind::traffic, 0, 300.0, 0.0});
        for (int k = 4; k >= 0; --k)
            events.push_back({w0 + anchor - 11 * k, FeedKind::occupancy, 0, 0.4, 0.0});
        std::stable_sort(events.begin(), events.end(), [](const FeedEvent& a, const FeedEvent& b) {
            return std::tie(a.time, a.kind) < std::tie(b.time, b.kind);
        });
        for (const auto& e : events)
            state.apply(e);
        state.advance(w0 + anchor);
        return state.inputs();
    };
    CHECK(inputs_with_anchor(59).has_value());
    CHECK_FALSE(inputs_with_anchor(60).has_value());
}

TEST_CASE("future data never reaches earlier bundles")
{
    auto& f = fixture();
    const Timestamp start = f.window_start();
    const Timestamp cut = start + 90;
    ReplayConfig cfg;
    cfg.jitter = 2;
    cfg.seed = 5;
    const auto full = run(replay_feeds(f.dataset, start, start + 240, cfg));
    const auto truncated = run(replay_feeds(f.dataset, start, cut, cfg));

    Dataset scrambled = f.dataset;
    const auto from = static_cast<std::size_t>(cut - scrambled.grid.start);
    for (std::size_t i = from; i < scrambled.garage.occupancy_rate.size(); ++i) {
        scrambled.garage.occupancy_rate[i] = 1.0 - scrambled.garage.occupancy_rate[i];
        for (auto& flow : scrambled.exogenous.traffic_flow)
            flow[i] *= 3.0;
        scrambled.exogenous.temperature[i] += 200.0;
    }
    const auto poisoned = run(replay_feeds(scrambled, start, start + 240, cfg));

    std::vector<PredictionBundle> before;
    for (const auto& b : full)
        if (b.issued < cut)
            before.push_back(b);
    CHECK(before.size() == 54);
    CHECK(truncated == before);
    std::vector<PredictionBundle> poisoned_before;
    for (const auto& b : poisoned)
        if (b.issued < cut)
            poisoned_before.push_back(b);
    CHECK(poisoned_before == before);
    CHECK(poisoned != full);
}

TEST_CASE("bundle json round trip and validation")
{
    const auto b = sample_bundle(from_civil(2019, 3, 4, 10, 15));
    const auto line = b.to_line();
    CHECK(line.rfind("{\"issued\":\"2019-03-04T10:15Z\",\"garage\":\"centraal\",\"target\":\"occupancy\"", 0) == 0);
    const auto back = PredictionBundle::from_json(nlohmann::json::parse(line));
    CHECK(back == b);
    auto j = nlohmann::json::parse(line);
    j["predictions"].erase("35");
    CHECK(code_of([&] { PredictionBundle::from_json(j); }) == ErrorCode::SchemaMismatch);
    j = nlohmann::json::parse(line);
    j["target"] = "revenue";
    CHECK(code_of([&] { PredictionBundle::from_json(j); }) == ErrorCode::SchemaMismatch);
    j = nlohmann::json::parse(line);
    j.erase("issued");
    CHECK(code_of([&] { PredictionBundle::from_json(j); }) == ErrorCode::SchemaMismatch);

    std::ostringstream out;
    JsonlSink sink(out);
    sink.write(b);
    sink.write(b);
    CHECK(out.str() == line + "\n" + line + "\n");
}

namespace {

class GatedSink : public BundleSink {
public:
    void write(const PredictionBundle& b) override
    {
        std::unique_lock lock(m);
        cv.wait(lock, [this] { return open; });
        got.push_back(b);
    }
    void release()
    {
        {
            std::lock_guard lock(m);
            open = true;
        }
        cv.notify_all();
    }
    std::mutex m;
    std::condition_variable cv;
    bool open = false;
    std::vector<PredictionBundle> got;
};

}  // namespace

TEST_CASE("queued sink drops the oldest bundles when full")
{
    GatedSink gate;
    QueuedSink q(gate, 2);
    const Timestamp t0 = from_civil(2019, 3, 4);
    for (int i = 0; i < 10; ++i)
        q.write(sample_bundle(t0 + 5 * i));
    const auto dropped = q.dropped();
    CHECK(dropped >= 7);
    CHECK(dropped <= 8);
    gate.release();
    q.flush();
    CHECK(gate.got.size() + dropped == 10);
    CHECK(gate.got.back().issued == t0 + 45);
    q.close();
    CHECK_THROWS_AS(q.write(sample_bundle(t0)), Error);

    CollectingSink plain;
    {
        QueuedSink roomy(plain, 64);
        for (int i = 0; i < 20; ++i)
            roomy.write(sample_bundle(t0 + i));
    }  // closing drains the queue
    CHECK(plain.bundles.size() == 20);
}

TEST_CASE("a blocking queue never drops")
{
    GatedSink gate;
    QueuedSink q(gate, 2, Overflow::block);
    const Timestamp t0 = from_civil(2019, 3, 4);
    std::thread producer([&] {
        for (int i = 0; i < 10; ++i)
            q.write(sample_bundle(t0 + 5 * i));
    });
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    gate.release();
    producer.join();
    q.flush();
    CHECK(q.dropped() == 0);
    REQUIRE(gate.got.size() == 10);
    for (int i = 0; i < 10; ++i)
        CHECK(gate.got[static_cast<std::size_t>(i)].issued == t0 + 5 * i);
}

TEST_CASE("http endpoint serves the latest bundles and health")
{
    LatestBundles store;
    HttpEndpoint http(store);
    const int port = http.start("127.0.0.1", 0);
    REQUIRE(port > 0);
    httplib::Client client("127.0.0.1", port);

    auto health = client.Get("/health");
    REQUIRE(health);
    CHECK(health->status == 200);
    CHECK(nlohmann::json::parse(health->body).at("status") == "starting");

    const Timestamp t0 = from_civil(2019, 3, 4, 9, 0);
    store.write(sample_bundle(t0, 0.1));
    store.write(sample_bundle(t0 + 5, 0.2));
    auto influx = sample_bundle(t0 + 5, 7.0);
    influx.target = Target::influx;
    store.write(influx);
    store.set_status(t0 + 5, 4);

    auto preds = client.Get("/predictions");
    REQUIRE(preds);
    const auto arr = nlohmann::json::parse(preds->body);
    REQUIRE(arr.size() == 2);
    CHECK(arr[0].at("target") == "occupancy");
    CHECK(arr[0].at("issued") == "2019-03-04T09:05Z");
    CHECK(arr[1].at("target") == "influx");
    health = client.Get("/health");
    const auto h = nlohmann::json::parse(health->body);
    CHECK(h.at("status") == "ok");
    CHECK(h.at("staleness_min") == 4);
    store.set_status(t0 + 60, 45);
    CHECK(nlohmann::json::parse(client.Get("/health")->body).at("status") == "stale");
    CHECK(client.Get("/nothing")->status == 404);
    http.stop();
}

TEST_CASE("realtime evaluation")
{
    const MinuteGrid g{from_civil(2019, 3, 4), 600};
    Series truth(600);
    for (std::size_t i = 0; i < truth.size(); ++i)
        truth[i] = 0.3 + 0.2 * std::sin(static_cast<double>(i) / 40.0);
    auto naive = [&](Timestamp t, int h) { return truth[static_cast<std::size_t>(t - g.start)] + 0.01 * h; };

    std::vector<PredictionBundle> perfect, lazy;
    for (int k = 0; k < 50; ++k) {
        const Timestamp t = g.at(10 + 5 * k);
        auto b = sample_bundle(t);
        auto n = b;
        for (auto& [h, v] : b.predictions)
            v = truth[static_cast<std::size_t>(t + h - g.start)];
        for (auto& [h, v] : n.predictions)
            v = naive(t, h);
        perfect.push_back(b);
        lazy.push_back(n);
    }
    const auto rp = realtime_evaluate(perfect, g, truth, naive);
    CHECK(rp.model == "realtime");
    CHECK(rp.pooled.mse == 0.0);
    CHECK(*rp.pooled.mase == 0.0);
    CHECK(rp.pooled.n == 600);
    const auto rl = realtime_evaluate(lazy, g, truth, naive);
    CHECK(*rl.pooled.mase == Approx(1.0));

    auto late = perfect;
    late.push_back(sample_bundle(g.at(590)));
    CHECK(code_of([&] { realtime_evaluate(late, g, truth, naive); }) == ErrorCode::CoverageGap);
    auto mixed = perfect;
    mixed[3].target = Target::influx;
    CHECK(code_of([&] { realtime_evaluate(mixed, g, truth, naive); }) == ErrorCode::ShapeMismatch);
    CHECK(code_of([&] { realtime_evaluate(std::span<const PredictionBundle>{}, g, truth, naive); }) ==
          ErrorCode::EmptyInput);
}

TEST_CASE("artifacts must agree with the feed layout")
{
    auto& f = fixture();
    FeedState other({"X1", "X2"}, f.data.frame.config, HolidayCalendar{});
    CollectingSink sink;
    BundleSink* sinks[] = {&sink};
    const std::vector<FeedEvent> none;
    CHECK(code_of([&] { serve(f.artifacts, none, other, sinks); }) == ErrorCode::SchemaMismatch);
    auto state = f.fresh_state();
    state.apply({f.window_start(), FeedKind::tick});
    CHECK_THROWS_AS(state.apply({f.window_start() - 1, FeedKind::occupancy, 0, 0.5}), Error);
}

TEST_CASE("replay config json keeps infinite speed")
{
    ReplayConfig c;
    c.jitter = 2;
    c.seed = 9;
    const nlohmann::json j = c;
    CHECK(j.at("speed").is_null());
    const auto back = j.get<ReplayConfig>();
    CHECK(std::isinf(back.speed));
    CHECK(back.jitter == 2);
    CHECK(back.seed == 9);
    c.speed = 60.0;
    CHECK(nlohmann::json(c).get<ReplayConfig>().speed == 60.0);
}
