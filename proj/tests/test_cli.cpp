#include "helpers.hpp"

#include "parkcast/cli.hpp"
#include "parkcast/error.hpp"

#include <doctest.h>

#include <sstream>

using namespace parkcast;
using testutil::slurp;
using testutil::spit;
namespace fs = std::filesystem;

namespace {

struct Result {
    int status = 0;
    std::string out;
    std::string err;
};

Result cli(std::vector<std::string> args)
{
    std::ostringstream out, err;
    const int status = run_cli(args, out, err);
    return {status, out.str(), err.str()};
}

const char* kTinyConfig = R"({
  "models": {"ffnn": {"hidden": [8], "epochs": 4, "learning_rate": 0.003, "batch_size": 64},
             "rf": {"n_trees": 4, "max_depth": 6}},
  "tune": {"ffnn_grids": [[{"name": "neurons", "values": [4, 8]}, {"name": "layers", "values": [1]}]],
           "rf_grids": [[{"name": "max_depth", "values": [3, 6]}]],
           "forest_sizes": [1, 2, 4], "probe_epochs": 3},
  "ablate": {"halving_levels": 2},
  "realtime": {"days": 1},
  "evaluate": {"latency_samples": 10}
})";

fs::path write_config(const fs::path& dir)
{
    fs::create_directories(dir);
    spit(dir / "cfg.json", kTinyConfig);
    return dir / "cfg.json";
}

std::vector<std::string> base_args(const fs::path& cfg, const fs::path& out, const char* cmd)
{
    return {"--config", cfg.string(), "--seed", "11", "--days", "30", "--out-dir", out.string(), cmd};
}

nlohmann::json error_of(const Result& r)
{
    return nlohmann::json::parse(r.err);
}

}  // namespace

TEST_CASE("synth is a pure function of the seed")
{
    const auto dir = testutil::scratch_dir("cli_synth");
    const auto cfg = write_config(dir);
    REQUIRE(cli(base_args(cfg, dir / "a", "synth")).status == 0);
    REQUIRE(cli(base_args(cfg, dir / "b", "synth")).status == 0);
    for (const char* f : {"transactions.csv", "traffic.csv", "weather.csv", "holidays.csv", "city.json"})
        CHECK(slurp(dir / "a" / "raw" / f) == slurp(dir / "b" / "raw" / f));
    auto ca = nlohmann::json::parse(slurp(dir / "a" / "config.json"));
    auto cb = nlohmann::json::parse(slurp(dir / "b" / "config.json"));
    CHECK(ca.at("paths") != cb.at("paths"));
    ca.erase("paths");
    cb.erase("paths");
    CHECK(ca == cb);

    auto other = base_args(cfg, dir / "c", "synth");
    other[3] = "12";
    REQUIRE(cli(other).status == 0);
    CHECK(slurp(dir / "a" / "raw" / "transactions.csv") != slurp(dir / "c" / "raw" / "transactions.csv"));
}

TEST_CASE("commands run out of order explain what is missing")
{
    const auto dir = testutil::scratch_dir("cli_order");
    const auto cfg = write_config(dir);
    const auto r = cli(base_args(cfg, dir / "run", "train"));
    CHECK(r.status == 2);
    const auto e = error_of(r);
    CHECK(e.at("error") == "ConfigInvalid");
    CHECK(e.at("command") == "train");
    CHECK(e.at("message").get<std::string>().find("prepare") != std::string::npos);
    CHECK(cli(base_args(cfg, dir / "run", "prepare")).status == 2);
}

TEST_CASE("an invalid config reports every violation at once")
{
    const auto dir = testutil::scratch_dir("cli_invalid");
    spit(dir / "bad.json", R"({"signal": {"cutoff": 1.5}, "dataset": {"train_stride": 0},
                              "models": {"rf": {"n_trees": 0}}, "colour": "blue"})");
    auto r = cli({"--config", (dir / "bad.json").string(), "--out-dir", (dir / "run").string(), "synth"});
    CHECK(r.status == 2);
    auto msg = error_of(r).at("message").get<std::string>();
    CHECK(msg.find("colour") != std::string::npos);

    spit(dir / "bad2.json", R"({"signal": {"cutoff": 1.5}, "dataset": {"train_stride": 0},
                               "models": {"rf": {"n_trees": 0}}})");
    r = cli({"--config", (dir / "bad2.json").string(), "--out-dir", (dir / "run").string(), "synth"});
    CHECK(r.status == 2);
    msg = error_of(r).at("message").get<std::string>();
    CHECK(msg.find("signal.cutoff") != std::string::npos);
    CHECK(msg.find("train_stride") != std::string::npos);
    CHECK(msg.find("models.rf") != std::string::npos);

    spit(dir / "broken.json", "{not json");
    CHECK(cli({"--config", (dir / "broken.json").string(), "synth"}).status == 2);
    CHECK(cli({"frobnicate"}).status == 2);
    CHECK(cli({}).status == 2);
}

TEST_CASE("run config round trip, seeds and digest")
{
    auto c = RunConfig::defaults();
    c.seed = 99;
    const auto back = RunConfig::from_json(c.to_json());
    CHECK(back.to_json() == c.to_json());
    const auto r = c.resolved();
    CHECK(r.synth.seed == 99);
    CHECK(r.mlp.seed == derive_seed(99, 1));
    CHECK(r.forest.seed == derive_seed(99, 2));
    CHECK(r.replay.seed == derive_seed(99, 3));
    auto moved = c;
    moved.out_dir = "/somewhere/else";
    CHECK(moved.digest() == c.digest());
    moved.seed = 100;
    CHECK(moved.digest() != c.digest());
    CHECK(c.violations().empty());
}

TEST_CASE("dataset persistence round trip")
{
    const auto city = generate_synthetic_city(testutil::small_city(9, 4, 2));
    const auto data = testutil::dataset_of(city);
    const auto dir = testutil::scratch_dir("cli_dataset");
    save_dataset(data, dir);
    const auto back = load_dataset(dir);
    CHECK(back.grid == data.grid);
    CHECK(back.row_mask == data.row_mask);
    CHECK(back.garage.influx == data.garage.influx);
    CHECK(back.garage.occupancy_counts() == data.garage.occupancy_counts());
    CHECK(back.exogenous.location_ids == data.exogenous.location_ids);
    save_dataset(back, dir / "again");
    CHECK(dataset_digest(dir) == dataset_digest(dir / "again"));
}

TEST_CASE("end to end pipeline")
{
    const auto dir = testutil::scratch_dir("cli_e2e");
    const auto cfg = write_config(dir);
    const auto run = dir / "run";
    for (const char* cmd : {"synth", "prepare", "train", "evaluate", "tune", "ablate", "serve", "replay-eval"}) {
        const auto r = cli(base_args(cfg, run, cmd));
        INFO(cmd << ": " << r.err);
        REQUIRE(r.status == 0);
    }
    for (const char* f : {"dataset/dataset.csv", "dataset/meta.json", "dataset/prepare.json", "models/manifest.json",
                          "models/ffnn_occupancy.pkc", "models/rf_outflux.pkc", "reports/report.json",
                          "reports/latency.json", "reports/rf_influx/errors.csv", "reports/ffnn_occupancy/errors_summary.json",
                          "tune/tune.json", "tune/rf_tree_counts.csv", "tune/ffnn_grid0/tune_heatmap.csv",
                          "tune/ffnn_grid0/tune_curves.csv", "tune/rf_grid0/tune_heatmap.csv",
                          "ablation/rf/ablation_features.csv", "ablation/rf/ablation_data.csv",
                          "realtime/bundles.jsonl", "realtime/serve.json", "realtime/realtime_report.json"})
        CHECK_MESSAGE(fs::exists(run / f), std::string(f));

    const auto report = nlohmann::json::parse(slurp(run / "reports" / "report.json"));
    CHECK(report.at("models").size() == 6);
    CHECK(report.at("dataset_digest") == dataset_digest(run / "dataset"));
    const auto latency = nlohmann::json::parse(slurp(run / "reports" / "latency.json"));
    REQUIRE(latency.size() == 6);
    for (const auto& entry : latency)
        CHECK(entry.at("latency").at("n") == 10);

    const auto artifact = load_artifact(run / "models" / "rf_occupancy.pkc");
    CHECK(artifact.metadata.at("dataset_digest") == dataset_digest(run / "dataset"));
    CHECK(artifact.metadata.contains("config_digest"));

    // One replayed day: 288 ticks, one bundle per target each.
    std::istringstream lines(slurp(run / "realtime" / "bundles.jsonl"));
    std::string line;
    std::size_t n = 0;
    while (std::getline(lines, line)) {
        const auto b = PredictionBundle::from_json(nlohmann::json::parse(line));
        CHECK(b.garage == "centraal");
        ++n;
    }
    CHECK(n == 3 * 288);
    const auto rt = nlohmann::json::parse(slurp(run / "realtime" / "realtime_report.json"));
    CHECK(rt.at("targets").contains("occupancy"));

    // Tampering with the prepared dataset is caught before evaluation.
    // Bump the influx count of the first minute; the file still parses.
    auto csv = slurp(run / "dataset" / "dataset.csv");
    const auto row = csv.find('\n') + 1;
    const auto first = csv.find(',', csv.find(',', row) + 1) + 1;
    const auto last = csv.find(',', first);
    csv.replace(first, last - first, std::to_string(std::stoi(csv.substr(first, last - first)) + 1));
    spit(run / "dataset" / "dataset.csv", csv);
    const auto r = cli(base_args(cfg, run, "evaluate"));
    CHECK(r.status == 1);
    CHECK(error_of(r).at("error") == "DigestMismatch");
}
