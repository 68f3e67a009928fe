#pragma once

#include "parkcast/analysis.hpp"
#include "parkcast/realtime.hpp"
#include "parkcast/training.hpp"
#include "parkcast/tune.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace parkcast {

/// The whole experiment in one document. Section seeds are derived from the
/// master seed; seeds written inside sections are ignored.
struct RunConfig {
    std::filesystem::path out_dir = "parkcast-run";
    std::uint64_t seed = 7;

    SyntheticCityConfig synth = SyntheticCityConfig::defaults();
    int initial_occupancy = 0;
    SplitSpec split;
    SignalConfig signal;
    int train_stride = 10;
    int eval_stride = 5;

    std::vector<ModelKind> kinds{ModelKind::mlp, ModelKind::forest};
    MlpTrainConfig mlp;
    ForestParams forest;

    Target tune_target = Target::occupancy;
    std::vector<GridSpec> mlp_grids;
    std::vector<GridSpec> forest_grids;
    std::vector<int> forest_sizes{1, 5, 10, 25, 50, 100};
    int probe_epochs = 200;  // epoch budget of each ffnn grid cell

    ModelKind ablate_kind = ModelKind::forest;
    int halving_levels = 6;

    ModelKind realtime_kind = ModelKind::forest;
    ReplayConfig replay;
    int replay_days = 7;
    std::size_t queue_capacity = 1024;
    int http_port = -1;  // negative disables the HTTP endpoint
    std::string http_host = "127.0.0.1";
    int latency_samples = 200;

    static RunConfig defaults();
    static RunConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;

    /// Every violated constraint, empty when valid.
    std::vector<std::string> violations() const;
    /// Throws ConfigInvalid listing every violation.
    void validate() const;
    /// SHA-256 of the configuration without its output path.
    std::string digest() const;
    /// Copies the master seed into the section configs.
    RunConfig resolved() const;
};

/// Persisted dataset: `dataset.csv` (one row per minute) and `meta.json`.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);
/// SHA-256 of the saved `dataset.csv`.
std::string dataset_digest(const std::filesystem::path& dir);

/// Runs one subcommand. Returns the process exit status; failures print a
/// single JSON object `{"error": code, "message": ...}` on `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace parkcast
