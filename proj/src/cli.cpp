#include "parkcast/cli.hpp"

#include "parkcast/error.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

namespace parkcast {

namespace fs = std::filesystem;
using nlohmann::json;

// --- configuration -----------------------------------------------------------

namespace {

json grid_to_json(const GridSpec& g)
{
    json axes = json::array();
    for (const auto& a : g.axes)
        axes.push_back({{"name", a.name}, {"values", a.values}});
    return axes;
}

GridSpec grid_from_json(const json& j)
{
    GridSpec g;
    for (const auto& a : j)
        g.axes.push_back({a.at("name").get<std::string>(), a.at("values").get<std::vector<json>>()});
    return g;
}

GridSpec make_grid(std::initializer_list<std::pair<const char*, std::vector<json>>> axes)
{
    GridSpec g;
    for (const auto& [name, values] : axes)
        g.axes.push_back({name, values});
    return g;
}

ModelKind kind_from_json(const json& j)
{
    return parse_model_kind(j.get<std::string>());
}

Target target_from_json(const json& j)
{
    const auto name = j.get<std::string>();
    const auto t = parse_target(name);
    if (!t)
        fail(ErrorCode::ConfigInvalid, "unknown target '" + name + "'");
    return *t;
}

}  // namespace

RunConfig RunConfig::defaults()
{
    RunConfig c;
    std::vector<json> neurons, layers, depths;
    for (int n = 10; n <= 100; n += 10)
        neurons.emplace_back(n);
    for (int l = 1; l <= 6; ++l)
        layers.emplace_back(l);
    for (int d = 2; d <= 20; d += 2)
        depths.emplace_back(d);
    c.mlp_grids = {make_grid({{"neurons", neurons}, {"layers", layers}}),
                   make_grid({{"learning_rate", {1e-2, 1e-3, 1e-4, 1e-5}}})};
    c.forest_grids = {make_grid({{"max_depth", depths}, {"max_features", {"all", "sqrt", "half"}}})};
    return c;
}

json RunConfig::to_json() const
{
    json kinds_j = json::array();
    for (auto k : kinds)
        kinds_j.push_back(std::string(to_string(k)));
    json mlp_g = json::array(), rf_g = json::array();
    for (const auto& g : mlp_grids)
        mlp_g.push_back(grid_to_json(g));
    for (const auto& g : forest_grids)
        rf_g.push_back(grid_to_json(g));
    const auto& lb = signal.lookback;
    return {
        {"seed", seed},
        {"paths", {{"out_dir", out_dir.string()}}},
        {"synth", synth},
        {"dataset",
         {{"initial_occupancy", initial_occupancy},
          {"split",
           {{"train", split.train_fraction}, {"validation", split.validation_fraction}, {"test", split.test_fraction}}},
          {"train_stride", train_stride},
          {"eval_stride", eval_stride}}},
        {"signal",
         {{"filter_order", signal.filter_order},
          {"cutoff", signal.cutoff},
          {"rolling_window", signal.rolling_window},
          {"flux_interval", signal.flux_interval},
          {"lookback",
           {{"occupancy_lags", lb.occupancy_lags},
            {"occupancy_cadence", lb.occupancy_cadence},
            {"flow_lags", lb.flow_lags},
            {"flow_step", lb.flow_step}}}}},
        {"models", {{"kinds", kinds_j}, {"ffnn", mlp}, {"rf", forest}}},
        {"tune",
         {{"target", std::string(to_string(tune_target))},
          {"ffnn_grids", mlp_g},
          {"rf_grids", rf_g},
          {"forest_sizes", forest_sizes},
          {"probe_epochs", probe_epochs}}},
        {"ablate", {{"kind", std::string(to_string(ablate_kind))}, {"halving_levels", halving_levels}}},
        {"realtime",
         {{"kind", std::string(to_string(realtime_kind))},
          {"replay", replay},
          {"days", replay_days},
          {"queue_capacity", queue_capacity},
          {"http_port", http_port},
          {"http_host", http_host}}},
        {"evaluate", {{"latency_samples", latency_samples}}},
    };
}

namespace {

// Reads each section independently so one bad section does not hide the rest.
struct SectionReader {
    const json& root;
    std::vector<std::string>& problems;

    template <class F>
    void operator()(const char* section, F&& read)
    {
        if (!root.contains(section))
            return;
        try {
            const json& s = root.at(section);
            if (!s.is_object() && std::string_view(section) != "seed")
                fail(ErrorCode::ConfigInvalid, "must be an object");
            read(s);
        } catch (const std::exception& e) {
            problems.push_back(std::string(section) + ": " + e.what());
        }
    }
};

void throw_config(const std::vector<std::string>& problems)
{
    std::string msg = "invalid configuration: ";
    for (std::size_t i = 0; i < problems.size(); ++i)
        msg += (i ? "; " : "") + problems[i];
    fail(ErrorCode::ConfigInvalid, msg);
}

}  // namespace

RunConfig RunConfig::from_json(const json& j)
{
    RunConfig c = defaults();
    std::vector<std::string> problems;
    if (!j.is_object())
        throw_config({"configuration must be a JSON object"});
    SectionReader section{j, problems};
    section("seed", [&](const json& s) { c.seed = s.get<std::uint64_t>(); });
    section("paths", [&](const json& s) {
        if (s.contains("out_dir"))
            c.out_dir = s.at("out_dir").get<std::string>();
    });
    section("synth", [&](const json& s) { c.synth = s.get<SyntheticCityConfig>(); });
    section("dataset", [&](const json& s) {
        c.initial_occupancy = s.value("initial_occupancy", c.initial_occupancy);
        if (s.contains("split")) {
            const auto& sp = s.at("split");
            c.split.train_fraction = sp.value("train", c.split.train_fraction);
            c.split.validation_fraction = sp.value("validation", c.split.validation_fraction);
            c.split.test_fraction = sp.value("test", c.split.test_fraction);
        }
        c.train_stride = s.value("train_stride", c.train_stride);
        c.eval_stride = s.value("eval_stride", c.eval_stride);
    });
    section("signal", [&](const json& s) {
        c.signal.filter_order = s.value("filter_order", c.signal.filter_order);
        c.signal.cutoff = s.value("cutoff", c.signal.cutoff);
        c.signal.rolling_window = s.value("rolling_window", c.signal.rolling_window);
        c.signal.flux_interval = s.value("flux_interval", c.signal.flux_interval);
        if (s.contains("lookback")) {
            auto& lb = c.signal.lookback;
            const auto& l = s.at("lookback");
            lb.occupancy_lags = l.value("occupancy_lags", lb.occupancy_lags);
            lb.occupancy_cadence = l.value("occupancy_cadence", lb.occupancy_cadence);
            lb.flow_lags = l.value("flow_lags", lb.flow_lags);
            lb.flow_step = l.value("flow_step", lb.flow_step);
        }
    });
    section("models", [&](const json& s) {
        if (s.contains("kinds")) {
            c.kinds.clear();
            for (const auto& k : s.at("kinds"))
                c.kinds.push_back(kind_from_json(k));
        }
        if (s.contains("ffnn"))
            c.mlp = s.at("ffnn").get<MlpTrainConfig>();
        if (s.contains("rf"))
            c.forest = s.at("rf").get<ForestParams>();
    });
    section("tune", [&](const json& s) {
        if (s.contains("target"))
            c.tune_target = target_from_json(s.at("target"));
        if (s.contains("ffnn_grids")) {
            c.mlp_grids.clear();
            for (const auto& g : s.at("ffnn_grids"))
                c.mlp_grids.push_back(grid_from_json(g));
        }
        if (s.contains("rf_grids")) {
            c.forest_grids.clear();
            for (const auto& g : s.at("rf_grids"))
                c.forest_grids.push_back(grid_from_json(g));
        }
        if (s.contains("forest_sizes"))
            c.forest_sizes = s.at("forest_sizes").get<std::vector<int>>();
        c.probe_epochs = s.value("probe_epochs", c.probe_epochs);
    });
    section("ablate", [&](const json& s) {
        if (s.contains("kind"))
            c.ablate_kind = kind_from_json(s.at("kind"));
        c.halving_levels = s.value("halving_levels", c.halving_levels);
    });
    section("realtime", [&](const json& s) {
        if (s.contains("kind"))
            c.realtime_kind = kind_from_json(s.at("kind"));
        if (s.contains("replay"))
            c.replay = s.at("replay").get<ReplayConfig>();
        c.replay_days = s.value("days", c.replay_days);
        c.queue_capacity = s.value("queue_capacity", c.queue_capacity);
        c.http_port = s.value("http_port", c.http_port);
        c.http_host = s.value("http_host", c.http_host);
    });
    section("evaluate", [&](const json& s) { c.latency_samples = s.value("latency_samples", c.latency_samples); });
    for (const auto& [key, value] : j.items()) {
        static const std::vector<std::string> known = {"seed", "paths", "synth", "dataset", "signal", "models",
                                                       "tune", "ablate", "realtime", "evaluate"};
        if (std::find(known.begin(), known.end(), key) == known.end())
            problems.push_back("unknown section '" + key + "'");
    }
    if (!problems.empty())
        throw_config(problems);
    return c;
}

std::vector<std::string> RunConfig::violations() const
{
    std::vector<std::string> v;
    auto check = [&](const char* section, auto&& validate) {
        try {
            validate();
        } catch (const std::exception& e) {
            v.push_back(std::string(section) + ": " + e.what());
        }
    };
    check("synth", [&] { synth.validate(); });
    check("dataset.split", [&] { split.validate(); });
    check("models.ffnn", [&] { mlp.validate(); });
    check("models.rf", [&] { forest.validate(); });
    check("realtime.replay", [&] { replay.validate(); });
    for (std::size_t i = 0; i < mlp_grids.size(); ++i)
        check("tune.ffnn_grids", [&] { mlp_grids[i].validate(); });
    for (std::size_t i = 0; i < forest_grids.size(); ++i)
        check("tune.rf_grids", [&] { forest_grids[i].validate(); });

    if (initial_occupancy < 0 || initial_occupancy > synth.capacity)
        v.push_back("dataset.initial_occupancy must lie in [0, capacity]");
    if (train_stride < 1)
        v.push_back("dataset.train_stride must be >= 1");
    if (eval_stride < 1)
        v.push_back("dataset.eval_stride must be >= 1");
    if (signal.filter_order < 1 || signal.filter_order > 8)
        v.push_back("signal.filter_order must be in [1, 8]");
    if (!(signal.cutoff > 0.0 && signal.cutoff < 1.0))
        v.push_back("signal.cutoff must be in (0, 1) as a fraction of Nyquist");
    if (signal.rolling_window < 1)
        v.push_back("signal.rolling_window must be >= 1");
    if (signal.flux_interval < 1)
        v.push_back("signal.flux_interval must be >= 1");
    const auto& lb = signal.lookback;
    if (lb.occupancy_lags < 1 || lb.occupancy_cadence < 1 || lb.flow_lags < 1 || lb.flow_step < 1)
        v.push_back("signal.lookback values must all be >= 1");
    if (kinds.empty())
        v.push_back("models.kinds must name at least one model");
    if (forest_sizes.empty())
        v.push_back("tune.forest_sizes must not be empty");
    for (std::size_t i = 0; i < forest_sizes.size(); ++i)
        if (forest_sizes[i] < 1 || (i > 0 && forest_sizes[i] <= forest_sizes[i - 1])) {
            v.push_back("tune.forest_sizes must be positive and strictly ascending");
            break;
        }
    if (probe_epochs < 1)
        v.push_back("tune.probe_epochs must be >= 1");
    if (halving_levels < 1)
        v.push_back("ablate.halving_levels must be >= 1");
    if (replay_days < 1)
        v.push_back("realtime.days must be >= 1");
    if (queue_capacity < 1)
        v.push_back("realtime.queue_capacity must be >= 1");
    if (http_port > 65535)
        v.push_back("realtime.http_port must be <= 65535");
    if (latency_samples < 1)
        v.push_back("evaluate.latency_samples must be >= 1");
    return v;
}

void RunConfig::validate() const
{
    const auto v = violations();
    if (!v.empty())
        throw_config(v);
}

std::string RunConfig::digest() const
{
    json j = resolved().to_json();
    j.erase("paths");
    return sha256_hex(j.dump());
}

RunConfig RunConfig::resolved() const
{
    RunConfig c = *this;
    c.synth.seed = seed;
    c.mlp.seed = derive_seed(seed, 1);
    c.forest.seed = derive_seed(seed, 2);
    c.replay.seed = derive_seed(seed, 3);
    return c;
}

// --- dataset persistence -----------------------------------------------------

namespace {

void write_file(const fs::path& path, std::string_view text)
{
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out || !out.write(text.data(), static_cast<std::streamsize>(text.size())))
        fail(ErrorCode::IoError, "cannot write " + path.string());
}

std::string read_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        fail(ErrorCode::FileUnreadable, "cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

double parse_cell(std::string_view s, const fs::path& path, std::size_t line)
{
    s = trim(s);
    if (s.empty())
        return kMissing;
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        fail(ErrorCode::SchemaMismatch, path.string() + ":" + std::to_string(line) + ": bad number '" +
                                            std::string(s) + "'");
    return v;
}

}  // namespace

void save_dataset(const Dataset& d, const fs::path& dir)
{
    std::string csv = "time,occupancy_rate,influx,outflux";
    for (const auto& id : d.exogenous.location_ids)
        csv += ",flow_" + id;
    csv += ",temperature,rain,holiday,complete\n";
    const auto& ex = d.exogenous;
    const auto& g = d.garage;
    for (std::int64_t i = 0; i < d.grid.length; ++i) {
        const auto k = static_cast<std::size_t>(i);
        csv += format_iso8601(d.grid.at(i));
        for (double v : {g.occupancy_rate[k], g.influx[k], g.outflux[k]})
            csv += ',' + format_double(v);
        for (const auto& f : ex.traffic_flow)
            csv += ',' + format_double(f[k]);
        for (double v : {ex.temperature[k], ex.rain[k], ex.holiday[k]})
            csv += ',' + format_double(v);
        csv += d.row_mask[k] ? ",1\n" : ",0\n";
    }
    write_file(dir / "dataset.csv", csv);
    const json meta = {{"garage_id", g.garage_id},
                       {"capacity", g.capacity},
                       {"start", format_iso8601(d.grid.start)},
                       {"length", d.grid.length},
                       {"location_ids", ex.location_ids}};
    write_file(dir / "meta.json", meta.dump(2) + "\n");
}

Dataset load_dataset(const fs::path& dir)
{
    json meta;
    try {
        meta = json::parse(read_file(dir / "meta.json"));
    } catch (const json::exception& e) {
        fail(ErrorCode::SchemaMismatch, "bad dataset meta: " + std::string(e.what()));
    }
    Dataset d;
    const auto start = parse_iso8601(meta.at("start").get<std::string>());
    if (!start)
        fail(ErrorCode::SchemaMismatch, "bad dataset start time");
    d.grid = {*start, meta.at("length").get<std::int64_t>()};
    const auto ids = meta.at("location_ids").get<std::vector<std::string>>();
    const auto n = static_cast<std::size_t>(d.grid.length);

    auto& g = d.garage;
    g.garage_id = meta.at("garage_id").get<std::string>();
    g.capacity = meta.at("capacity").get<int>();
    g.grid = d.grid;
    g.occupancy_rate.assign(n, kMissing);
    g.influx.assign(n, kMissing);
    g.outflux.assign(n, kMissing);
    auto& ex = d.exogenous;
    ex.grid = d.grid;
    ex.location_ids = ids;
    ex.traffic_flow.assign(ids.size(), Series(n, kMissing));
    ex.temperature.assign(n, kMissing);
    ex.rain.assign(n, kMissing);
    ex.holiday.assign(n, kMissing);
    d.row_mask.assign(n, 0);

    const fs::path csv_path = dir / "dataset.csv";
    std::istringstream in(read_file(csv_path));
    std::string line;
    std::getline(in, line);
    std::string expected = "time,occupancy_rate,influx,outflux";
    for (const auto& id : ids)
        expected += ",flow_" + id;
    expected += ",temperature,rain,holiday,complete";
    if (trim(line) != expected)
        fail(ErrorCode::SchemaMismatch, csv_path.string() + ": unexpected header");
    const std::size_t width = 4 + ids.size() + 4;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (trim(line).empty())
            continue;
        const std::size_t lineno = row + 2;
        const auto cells = split_csv_line(line);
        if (cells.size() != width || row >= n)
            fail(ErrorCode::SchemaMismatch, csv_path.string() + ":" + std::to_string(lineno) + ": malformed row");
        const auto t = parse_iso8601(trim(cells[0]));
        if (!t || *t != d.grid.at(static_cast<std::int64_t>(row)))
            fail(ErrorCode::SchemaMismatch, csv_path.string() + ":" + std::to_string(lineno) + ": time off grid");
        std::size_t c = 1;
        g.occupancy_rate[row] = parse_cell(cells[c++], csv_path, lineno);
        g.influx[row] = parse_cell(cells[c++], csv_path, lineno);
        g.outflux[row] = parse_cell(cells[c++], csv_path, lineno);
        for (auto& f : ex.traffic_flow)
            f[row] = parse_cell(cells[c++], csv_path, lineno);
        ex.temperature[row] = parse_cell(cells[c++], csv_path, lineno);
        ex.rain[row] = parse_cell(cells[c++], csv_path, lineno);
        ex.holiday[row] = parse_cell(cells[c++], csv_path, lineno);
        d.row_mask[row] = parse_cell(cells[c++], csv_path, lineno) == 1.0 ? 1 : 0;
        ++row;
    }
    if (row != n)
        fail(ErrorCode::SchemaMismatch, csv_path.string() + ": expected " + std::to_string(n) + " rows, found " +
                                            std::to_string(row));
    return d;
}

std::string dataset_digest(const fs::path& dir)
{
    return sha256_hex(read_file(dir / "dataset.csv"));
}

// --- subcommands -------------------------------------------------------------

namespace {

struct Context {
    RunConfig config;
    std::string config_digest;
    bool verbose = false;
    std::ostream& out;
    std::ostream& err;

    fs::path raw_dir() const { return config.out_dir / "raw"; }
    fs::path dataset_dir() const { return config.out_dir / "dataset"; }
    fs::path models_dir() const { return config.out_dir / "models"; }
    fs::path reports_dir() const { return config.out_dir / "reports"; }

    void log(const std::string& msg) const
    {
        if (verbose)
            err << "[parkcast] " << msg << '\n';
    }
};

std::string artifact_name(ModelKind kind, Target target)
{
    return std::string(to_string(kind)) + "_" + std::string(to_string(target)) + ".pkc";
}

ModelConfig model_config(const RunConfig& c)
{
    return {c.mlp, c.forest};
}

void require_dataset(const Context& ctx)
{
    const auto csv = ctx.dataset_dir() / "dataset.csv";
    if (!fs::exists(csv) || !fs::exists(ctx.dataset_dir() / "meta.json"))
        fail(ErrorCode::ConfigInvalid, "dataset not prepared: " + csv.string() + " is missing (run `prepare` first)");
}

struct LoadedData {
    Dataset dataset;
    std::string digest;
    PreparedData prepared;
};

LoadedData load_prepared(const Context& ctx)
{
    require_dataset(ctx);
    LoadedData l;
    l.dataset = load_dataset(ctx.dataset_dir());
    l.digest = dataset_digest(ctx.dataset_dir());
    l.prepared = prepare_data(l.dataset, ctx.config.signal, ctx.config.split);
    return l;
}

ModelArtifact load_checked(const Context& ctx, ModelKind kind, Target target, const std::string& data_digest)
{
    const auto path = ctx.models_dir() / artifact_name(kind, target);
    if (!fs::exists(path))
        fail(ErrorCode::ConfigInvalid, "model artifact " + path.string() + " is missing (run `train` first)");
    auto a = load_artifact(path);
    const auto trained_on = a.metadata.value("dataset_digest", std::string());
    if (trained_on != data_digest)
        fail(ErrorCode::DigestMismatch, path.string() + " was trained on dataset " + trained_on +
                                            " but the prepared dataset is " + data_digest);
    if (a.kind != kind || a.target != target)
        fail(ErrorCode::SchemaMismatch, path.string() + " holds a different model or target");
    return a;
}

int cmd_synth(Context& ctx)
{
    const auto city = generate_synthetic_city(ctx.config.synth);
    const auto dir = ctx.raw_dir();
    fs::create_directories(dir);
    write_transactions_csv(dir / "transactions.csv", city.transactions);
    write_traffic_csv(dir / "traffic.csv", city.traffic);
    write_weather_csv(dir / "weather.csv", city.weather);
    write_holidays_csv(dir / "holidays.csv", city.holidays);
    const json meta = {{"garage_id", ctx.config.synth.garage_id},
                       {"capacity", ctx.config.synth.capacity},
                       {"start", format_iso8601(city.grid.start)},
                       {"length", city.grid.length},
                       {"location_ids", city.location_ids},
                       {"transactions", city.transactions.size()},
                       {"rejected_arrivals", city.rejected_arrivals},
                       {"config_digest", ctx.config_digest}};
    write_file(dir / "city.json", meta.dump(2) + "\n");
    ctx.out << "synth: " << city.transactions.size() << " transactions over " << ctx.config.synth.days
            << " days -> " << dir.string() << '\n';
    return 0;
}

int cmd_prepare(Context& ctx)
{
    const auto dir = ctx.raw_dir();
    for (const char* name : {"transactions.csv", "traffic.csv", "weather.csv"})
        if (!fs::exists(dir / name))
            fail(ErrorCode::ConfigInvalid, "raw input " + (dir / name).string() + " is missing (run `synth` first)");

    std::string garage_id = ctx.config.synth.garage_id;
    int capacity = ctx.config.synth.capacity;
    MinuteGrid grid{ctx.config.synth.start, static_cast<std::int64_t>(ctx.config.synth.days) * kMinutesPerDay};
    if (fs::exists(dir / "city.json")) {
        const auto meta = json::parse(read_file(dir / "city.json"));
        garage_id = meta.at("garage_id").get<std::string>();
        capacity = meta.at("capacity").get<int>();
        const auto start = parse_iso8601(meta.at("start").get<std::string>());
        if (!start)
            fail(ErrorCode::SchemaMismatch, "bad start in city.json");
        grid = {*start, meta.at("length").get<std::int64_t>()};
    }

    const auto out = ctx.dataset_dir();
    fs::create_directories(out);
    auto tx = parse_transactions_csv(dir / "transactions.csv");
    auto traffic = parse_traffic_csv(dir / "traffic.csv");
    auto weather = parse_weather_csv(dir / "weather.csv");
    HolidayCalendar holidays;
    std::size_t holiday_rejects = 0;
    if (fs::exists(dir / "holidays.csv")) {
        auto h = parse_holidays_csv(dir / "holidays.csv");
        holidays.days.insert(h.records.begin(), h.records.end());
        holiday_rejects = h.rejects.size();
        if (!h.rejects.empty())
            write_rejects_csv(out / "rejects_holidays.csv", h.rejects);
    }
    if (!tx.rejects.empty())
        write_rejects_csv(out / "rejects_transactions.csv", tx.rejects);
    if (!traffic.rejects.empty())
        write_rejects_csv(out / "rejects_traffic.csv", traffic.rejects);
    if (!weather.rejects.empty())
        write_rejects_csv(out / "rejects_weather.csv", weather.rejects);

    std::vector<TransactionRecord> own;
    for (const auto& r : tx.records)
        if (r.garage_id == garage_id)
            own.push_back(r);
    const auto stays = to_stays(own);
    const auto garage = derive_states_from_transactions(stays, capacity, ctx.config.initial_occupancy, grid, garage_id);
    const auto exo = build_exogenous(traffic.records, weather.records, holidays, grid);
    const auto dataset = assemble_dataset(garage, exo, grid);
    save_dataset(dataset, out);
    const auto split = chronological_split(dataset, ctx.config.split);

    const json report = {{"config_digest", ctx.config_digest},
                         {"dataset_digest", dataset_digest(out)},
                         {"rows", grid.length},
                         {"complete_rows", dataset.valid_rows()},
                         {"deletion_fraction", dataset.deletion_fraction()},
                         {"rejected",
                          {{"transactions", tx.rejects.size()},
                           {"traffic", traffic.rejects.size()},
                           {"weather", weather.rejects.size()},
                           {"holidays", holiday_rejects}}},
                         {"split",
                          {{"train", split.train.size()},
                           {"validation", split.validation.size()},
                           {"test", split.test.size()}}}};
    write_file(out / "prepare.json", report.dump(2) + "\n");
    ctx.out << "prepare: " << dataset.valid_rows() << " complete rows of " << grid.length << " -> " << out.string()
            << '\n';
    return 0;
}

int cmd_train(Context& ctx)
{
    const auto data = load_prepared(ctx);
    const auto& cfg = ctx.config;
    fs::create_directories(ctx.models_dir());
    json manifest = {{"config_digest", ctx.config_digest}, {"dataset_digest", data.digest}};
    json entries = json::array();
    for (auto target : kAllTargets) {
        const auto& p = data.prepared;
        const auto train = build_supervised(p.frame, p.schema, HorizonGrid::standard(), target, p.split.train,
                                            cfg.train_stride);
        const auto val = build_supervised(p.frame, p.schema, HorizonGrid::standard(), target, p.split.validation,
                                          cfg.eval_stride);
        for (auto kind : cfg.kinds) {
            ctx.log("training " + std::string(to_string(kind)) + " for " + std::string(to_string(target)) + " on " +
                    std::to_string(train.rows()) + " rows");
            const json meta = {{"config_digest", ctx.config_digest}, {"dataset_digest", data.digest}};
            const auto a = train_artifact(kind, train, val, p.schema, model_config(cfg), meta);
            const auto path = ctx.models_dir() / artifact_name(kind, target);
            save_artifact(a, path);
            entries.push_back({{"file", path.filename().string()},
                               {"kind", std::string(to_string(kind))},
                               {"target", std::string(to_string(target))},
                               {"validation_mse", a.metadata.at("validation_mse")}});
            ctx.out << "train: " << path.filename().string() << " validation MSE "
                    << format_double(a.metadata.at("validation_mse").get<double>()) << '\n';
        }
    }
    manifest["artifacts"] = entries;
    write_file(ctx.models_dir() / "manifest.json", manifest.dump(2) + "\n");
    return 0;
}

int cmd_evaluate(Context& ctx)
{
    const auto data = load_prepared(ctx);
    const auto& cfg = ctx.config;
    const auto& p = data.prepared;
    fs::create_directories(ctx.reports_dir());
    json models = json::array();
    json latency = json::array();
    for (auto kind : cfg.kinds) {
        for (auto target : kAllTargets) {
            const auto a = load_checked(ctx, kind, target, data.digest);
            const auto test = build_supervised(p.frame, a.schema, a.horizons, target, p.split.test, cfg.eval_stride);
            const auto report = evaluate(a, test, seasonal_naive_for(p.frame, target));
            const auto model_dir =
                ctx.reports_dir() / (std::string(to_string(kind)) + "_" + std::string(to_string(target)));
            export_error_distribution(report, model_dir / "errors.csv", model_dir / "errors_summary.json");
            models.push_back({{"kind", std::string(to_string(kind))},
                              {"target", std::string(to_string(target))},
                              {"artifact_digest", a.digest()},
                              {"artifact_config_digest", a.metadata.value("config_digest", std::string())},
                              {"report", report.to_json()}});

            std::vector<FeatureVector> inputs;
            const auto n = std::min<std::size_t>(test.rows(), static_cast<std::size_t>(cfg.latency_samples));
            for (std::size_t r = 0; r < n; ++r) {
                const auto row = test.X.row(r);
                inputs.push_back({std::vector<double>(row.begin(), row.end()), test.schema_digest});
            }
            latency.push_back({{"kind", std::string(to_string(kind))},
                               {"target", std::string(to_string(target))},
                               {"latency", to_json(measure_latency(a, inputs, cfg.latency_samples))}});

            const auto m = report.pooled.mase;
            ctx.out << "evaluate: " << to_string(kind) << ' ' << to_string(target) << " MASE "
                    << (m ? format_double(*m) : std::string("undefined")) << " MSE "
                    << format_double(report.pooled.mse) << '\n';
        }
    }
    const json out = {{"config_digest", ctx.config_digest}, {"dataset_digest", data.digest}, {"models", models}};
    write_file(ctx.reports_dir() / "report.json", out.dump(2) + "\n");
    // Timing varies run to run, so it stays out of the reproducible report.
    write_file(ctx.reports_dir() / "latency.json", latency.dump(2) + "\n");
    return 0;
}

int cmd_tune(Context& ctx)
{
    const auto data = load_prepared(ctx);
    const auto& cfg = ctx.config;
    const auto& p = data.prepared;
    const auto target = cfg.tune_target;
    const auto train =
        build_supervised(p.frame, p.schema, HorizonGrid::standard(), target, p.split.train, cfg.train_stride);
    const auto val =
        build_supervised(p.frame, p.schema, HorizonGrid::standard(), target, p.split.validation, cfg.eval_stride);
    const TrainingData td{train.X, train.Y, val.X, val.Y};
    const auto dir = cfg.out_dir / "tune";
    fs::create_directories(dir);

    json summary = {{"config_digest", ctx.config_digest},
                    {"dataset_digest", data.digest},
                    {"target", std::string(to_string(target))}};
    MlpTrainConfig probe = cfg.mlp;
    probe.epochs = cfg.probe_epochs;
    auto run_grids = [&](ModelKind kind, const std::vector<GridSpec>& grids, std::uint64_t salt) {
        json results = json::array();
        for (std::size_t i = 0; i < grids.size(); ++i) {
            ctx.log("grid " + std::to_string(i) + " for " + std::string(to_string(kind)) + ": " +
                    std::to_string(grids[i].cell_count()) + " cells");
            const auto r = grid_search(td, grids[i], kind, probe, cfg.forest, derive_seed(cfg.seed, salt + i));
            const std::string stem = std::string(to_string(kind)) + "_grid" + std::to_string(i);
            export_heatmap(grids[i], r, dir / stem / "tune_heatmap.csv");
            if (kind == ModelKind::mlp)
                export_curves(r, dir / stem / "tune_curves.csv");
            json best = nullptr;
            if (r.best)
                best = {{"cell", r.best_cell().values}, {"validation_mse", r.best_cell().val_mse}};
            std::size_t failed = 0;
            for (const auto& c : r.cells)
                failed += c.error ? 1 : 0;
            results.push_back({{"axes", grid_to_json(grids[i])}, {"best", best}, {"failed_cells", failed}});
            if (r.best)
                ctx.out << "tune: " << stem << " best " << r.best_cell().values.dump() << " validation MSE "
                        << format_double(r.best_cell().val_mse) << '\n';
        }
        return results;
    };
    if (std::find(cfg.kinds.begin(), cfg.kinds.end(), ModelKind::mlp) != cfg.kinds.end())
        summary["ffnn"] = run_grids(ModelKind::mlp, cfg.mlp_grids, 100);
    if (std::find(cfg.kinds.begin(), cfg.kinds.end(), ModelKind::forest) != cfg.kinds.end()) {
        summary["rf"] = run_grids(ModelKind::forest, cfg.forest_grids, 200);
        const auto sizes = select_forest_size(td, cfg.forest_sizes, cfg.forest, derive_seed(cfg.seed, 300));
        std::string csv = "n_trees,validation_mse\n";
        for (const auto& c : sizes.sweep.cells)
            csv += std::to_string(c.values.at("n_trees").get<int>()) + "," + format_double(c.val_mse) + "\n";
        write_file(dir / "rf_tree_counts.csv", csv);
        summary["rf_recommended_trees"] = sizes.recommended;
        ctx.out << "tune: recommended forest size " << sizes.recommended << '\n';
    }
    write_file(dir / "tune.json", summary.dump(2) + "\n");
    return 0;
}

int cmd_ablate(Context& ctx)
{
    const auto data = load_prepared(ctx);
    const auto& cfg = ctx.config;
    const auto& p = data.prepared;
    const auto kind = cfg.ablate_kind;
    const auto dir = cfg.out_dir / "ablation" / std::string(to_string(kind));
    fs::create_directories(dir);

    std::vector<TargetSplit> splits;
    for (auto target : kAllTargets) {
        auto sets = build_target_sets(p, p.schema, target, HorizonGrid::standard(), cfg.train_stride, cfg.eval_stride);
        splits.push_back({std::move(sets.train), std::move(sets.validation), std::move(sets.test), p.schema,
                          seasonal_naive_for(p.frame, target)});
    }
    ctx.log("feature elimination with " + std::string(to_string(kind)));
    const auto& occ = splits.front();
    const auto elim =
        feature_elimination_study(occ.train, occ.validation, occ.test, occ.schema, kind, model_config(cfg));
    export_elimination(elim, dir / "ablation_features.csv");
    ctx.log("data halving with " + std::to_string(cfg.halving_levels) + " levels");
    const auto halving = data_halving_study(splits, cfg.halving_levels, kind, model_config(cfg));
    export_halving(halving, dir / "ablation_data.csv");

    json deepest = json::object();
    for (auto target : kAllTargets)
        deepest[std::string(to_string(target))] = deepest_level_beating_naive(halving, target);
    const json summary = {{"config_digest", ctx.config_digest},
                          {"dataset_digest", data.digest},
                          {"kind", std::string(to_string(kind))},
                          {"reference_mse", elim.reference_mse},
                          {"most_damaging_category", std::string(to_string(elim.most_damaging()))},
                          {"deepest_level_beating_naive", deepest}};
    write_file(dir / "ablation.json", summary.dump(2) + "\n");
    ctx.out << "ablate: removing " << to_string(elim.most_damaging()) << " hurts most; results in " << dir.string()
            << '\n';
    return 0;
}

struct ReplayWindow {
    Timestamp start;
    Timestamp end;
};

// The most recent days of the test period, leaving an hour of truth after the last tick.
ReplayWindow replay_window(const LoadedData& data, const RunConfig& cfg)
{
    const auto& grid = data.dataset.grid;
    const auto& test = data.prepared.split.test;
    if (test.empty())
        fail(ErrorCode::ConfigInvalid, "test split is empty; nothing to replay");
    const Timestamp end = grid.end() - 60;
    Timestamp start = end - static_cast<std::int64_t>(cfg.replay_days) * kMinutesPerDay;
    const Timestamp test_start = grid.at(test.front());
    if (start < test_start)
        start = test_start;
    if (!(start < end))
        fail(ErrorCode::ConfigInvalid, "test period is too short to replay");
    return {start, end};
}

struct ServeRun {
    LoadedData data;
    std::vector<ModelArtifact> artifacts;
    ReplayWindow window;
    ServeSummary summary;
    std::size_t dropped = 0;
    std::vector<PredictionBundle> bundles;
};

ServeRun run_replay(Context& ctx, bool collect)
{
    const auto& cfg = ctx.config;
    ServeRun run;
    run.data = load_prepared(ctx);
    for (auto target : kAllTargets)
        run.artifacts.push_back(load_checked(ctx, cfg.realtime_kind, target, run.data.digest));
    run.window = replay_window(run.data, cfg);
    const auto events = replay_feeds(run.data.dataset, run.window.start, run.window.end, cfg.replay);
    FeedState state(run.data.dataset.exogenous.location_ids, cfg.signal, holidays_of(run.data.dataset));

    const auto dir = cfg.out_dir / "realtime";
    fs::create_directories(dir);
    std::ofstream jsonl(dir / "bundles.jsonl", std::ios::binary);
    if (!jsonl)
        fail(ErrorCode::IoError, "cannot write " + (dir / "bundles.jsonl").string());
    JsonlSink file_sink(jsonl);
    // Unpaced replays have no deadline to protect, so they wait instead of dropping.
    QueuedSink queued(file_sink, cfg.queue_capacity,
                      std::isfinite(cfg.replay.speed) ? Overflow::drop_oldest : Overflow::block);
    LatestBundles latest;
    CollectingSink collected;
    std::vector<BundleSink*> sinks{&queued, &latest};
    if (collect)
        sinks.push_back(&collected);

    std::unique_ptr<HttpEndpoint> http;
    if (cfg.http_port >= 0) {
        http = std::make_unique<HttpEndpoint>(latest);
        const int port = http->start(cfg.http_host, cfg.http_port);
        ctx.out << "serve: http://" << cfg.http_host << ':' << port << "/predictions" << std::endl;
    }

    std::ofstream error_log(dir / "tick_errors.log", std::ios::binary);
    ServeOptions options;
    options.garage = run.data.dataset.garage.garage_id;
    options.speed = cfg.replay.speed;
    options.status = &latest;
    options.log = &error_log;
    run.summary = serve(run.artifacts, events, state, sinks, options);
    queued.close();
    run.dropped = queued.dropped();
    if (http)
        http->stop();
    run.bundles = std::move(collected.bundles);
    return run;
}

json serve_json(const Context& ctx, const ServeRun& run)
{
    return {{"config_digest", ctx.config_digest},
            {"dataset_digest", run.data.digest},
            {"window", {{"start", format_iso8601(run.window.start)}, {"end", format_iso8601(run.window.end)}}},
            {"ticks", run.summary.ticks},
            {"bundles", run.summary.bundles},
            {"tick_errors", run.summary.errors.size()},
            {"dropped", run.dropped}};
}

int cmd_serve(Context& ctx)
{
    const auto run = run_replay(ctx, false);
    write_file(ctx.config.out_dir / "realtime" / "serve.json", serve_json(ctx, run).dump(2) + "\n");
    ctx.out << "serve: " << run.summary.ticks << " ticks, " << run.summary.bundles << " bundles, "
            << run.summary.errors.size() << " tick errors, " << run.dropped << " dropped\n";
    return 0;
}

int cmd_replay_eval(Context& ctx)
{
    const auto run = run_replay(ctx, true);
    const auto& p = run.data.prepared;
    const auto& grid = run.data.dataset.grid;
    json targets = json::object();
    for (const auto& a : run.artifacts) {
        std::vector<PredictionBundle> mine;
        for (const auto& b : run.bundles)
            if (b.target == a.target)
                mine.push_back(b);
        const auto naive = seasonal_naive_for(p.frame, a.target);
        const auto rt = realtime_evaluate(mine, grid, target_series(p.frame, a.target), naive);

        // Offline counterpart: the same model scored from fresh observations at the tick times.
        std::vector<std::int64_t> rows;
        for (const auto& b : mine)
            rows.push_back(b.issued - grid.start);
        const auto offline_set = build_supervised(p.frame, a.schema, a.horizons, a.target, rows, 1);
        const auto offline = evaluate(a, offline_set, naive);
        const auto off = offline.pooled_up_to(60);
        json entry = {{"realtime", rt.to_json()},
                      {"realtime_mase", rt.pooled.mase ? json(*rt.pooled.mase) : json(nullptr)},
                      {"realtime_mse", rt.pooled.mse},
                      {"offline_mase_to_60", off.mase ? json(*off.mase) : json(nullptr)},
                      {"offline_mse_to_60", off.mse}};
        targets[std::string(to_string(a.target))] = entry;
        ctx.out << "replay-eval: " << to_string(a.target) << " realtime MASE "
                << (rt.pooled.mase ? format_double(*rt.pooled.mase) : "undefined") << ", offline MASE "
                << (off.mase ? format_double(*off.mase) : "undefined") << '\n';
    }
    json report = serve_json(ctx, run);
    report["targets"] = targets;
    write_file(ctx.config.out_dir / "realtime" / "realtime_report.json", report.dump(2) + "\n");
    return 0;
}

json error_json(ErrorCode code, const std::string& message, const std::string& command)
{
    return {{"error", std::string(to_string(code))}, {"message", message}, {"command", command}};
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Parking garage occupancy and flux forecasting"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> days;
    std::string out_dir;
    bool verbose = false;
    app.add_option("--config", config_path, "JSON configuration file");
    app.add_option("--seed", seed, "master seed");
    app.add_option("--days", days, "days of synthetic data");
    app.add_option("--out-dir", out_dir, "working directory for all outputs");
    app.add_flag("-v,--verbose", verbose, "progress on stderr");

    std::optional<int> cadence, jitter, port, replay_days;
    std::optional<std::uint64_t> jitter_seed;
    std::optional<double> speed;
    std::string sink = "jsonl";
    const std::vector<std::pair<const char*, const char*>> commands = {
        {"synth", "generate a synthetic city"},
        {"prepare", "ingest, clean and persist the dataset"},
        {"train", "fit every configured model for all three targets"},
        {"tune", "grid searches with heatmap exports"},
        {"evaluate", "offline test report and error distributions"},
        {"ablate", "feature elimination and data halving studies"},
        {"serve", "replay feeds through the real-time loop"},
        {"replay-eval", "replay and score the real-time loop"}};
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        if (std::string_view(name) == "serve" || std::string_view(name) == "replay-eval") {
            sub->add_option("--cadence", cadence, "minutes between occupancy updates");
            sub->add_option("--jitter", jitter, "occupancy update jitter, +/- minutes");
            sub->add_option("--jitter-seed", jitter_seed, "seed of the jitter sequence");
            sub->add_option("--speed", speed, "replay minutes per wall-clock minute (inf for no pacing)");
            sub->add_option("--sink", sink, "jsonl or http (http also writes jsonl)")
                ->check(CLI::IsMember({"jsonl", "http"}));
            sub->add_option("--port", port, "HTTP port, 0 picks a free one");
            sub->add_option("--replay-days", replay_days, "days replayed");
        }
    }

    std::vector<const char*> argv{"parkcast"};
    for (const auto& a : args)
        argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << error_json(ErrorCode::ConfigInvalid, e.what(), "").dump() << '\n';
        return 2;
    }
    const std::string command = app.get_subcommands().front()->get_name();

    try {
        RunConfig cfg = RunConfig::defaults();
        if (!config_path.empty()) {
            json j;
            try {
                std::ifstream in(config_path);
                if (!in)
                    fail(ErrorCode::ConfigInvalid, "cannot read config file " + config_path);
                j = json::parse(in);
            } catch (const json::exception& e) {
                fail(ErrorCode::ConfigInvalid, "config file " + config_path + " is not valid JSON: " + e.what());
            }
            cfg = RunConfig::from_json(j);
        }
        if (seed)
            cfg.seed = *seed;
        if (days)
            cfg.synth.days = *days;
        if (!out_dir.empty())
            cfg.out_dir = out_dir;
        if (cadence)
            cfg.replay.occupancy_cadence = *cadence;
        if (jitter)
            cfg.replay.jitter = *jitter;
        if (speed)
            cfg.replay.speed = *speed;
        if (replay_days)
            cfg.replay_days = *replay_days;
        if (port)
            cfg.http_port = *port;
        else if (sink == "http" && cfg.http_port < 0)
            cfg.http_port = 0;
        cfg = cfg.resolved();
        if (jitter_seed)
            cfg.replay.seed = *jitter_seed;
        cfg.validate();

        Context ctx{cfg, cfg.digest(), verbose, out, err};
        fs::create_directories(cfg.out_dir);
        write_file(cfg.out_dir / "config.json", cfg.to_json().dump(2) + "\n");
        if (command == "synth")
            return cmd_synth(ctx);
        if (command == "prepare")
            return cmd_prepare(ctx);
        if (command == "train")
            return cmd_train(ctx);
        if (command == "tune")
            return cmd_tune(ctx);
        if (command == "evaluate")
            return cmd_evaluate(ctx);
        if (command == "ablate")
            return cmd_ablate(ctx);
        if (command == "serve")
            return cmd_serve(ctx);
        return cmd_replay_eval(ctx);
    } catch (const Error& e) {
        err << error_json(e.code(), e.what(), command).dump() << '\n';
        return e.code() == ErrorCode::ConfigInvalid ? 2 : 1;
    } catch (const std::exception& e) {
        err << json{{"error", "Internal"}, {"message", e.what()}, {"command", command}}.dump() << '\n';
        return 1;
    }
}

}  // namespace parkcast
