#pragma once

#include "parkcast/artifact.hpp"
#include "parkcast/forest.hpp"
#include "parkcast/mlp.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace parkcast {

struct GridAxis {
    std::string name;
    std::vector<nlohmann::json> values;
};

/// Cartesian product of named axes. Recognised axes: for ffnn `neurons`,
/// `layers`, `learning_rate`, `epochs`, `batch_size`; for rf `n_trees`,
/// `max_depth`, `max_features`, `min_samples_leaf`.
struct GridSpec {
    std::vector<GridAxis> axes;

    void validate() const;
    std::size_t cell_count() const;
    /// Axis values of cell `index`, first axis varying slowest.
    nlohmann::json cell(std::size_t index) const;
};

struct TuneCell {
    std::size_t index = 0;
    nlohmann::json values;
    std::uint64_t seed = 0;
    double val_mse = 0.0;
    std::vector<EpochLoss> curve;
    std::optional<std::string> error;  // e.g. Divergence; the sweep carries on
};

struct TuneResult {
    std::vector<TuneCell> cells;
    std::optional<std::size_t> best;

    const TuneCell& best_cell() const;
};

struct TrainingData {
    const Matrix& X_train;
    const Matrix& Y_train;
    const Matrix& X_val;
    const Matrix& Y_val;
};

MlpTrainConfig apply_cell(MlpTrainConfig base, const nlohmann::json& cell);
ForestParams apply_cell(ForestParams base, const nlohmann::json& cell);

double validation_mse(const Forest& forest, const Matrix& X_val, const Matrix& Y_val);

/// One model per cell, seeded derive_seed(master_seed, cell index). Best cell
/// is the lowest validation MSE; ties go to the lowest cell index.
TuneResult grid_search(const TrainingData& data, const GridSpec& grid, ModelKind kind, const MlpTrainConfig& mlp_base,
                       const ForestParams& forest_base, std::uint64_t master_seed);

struct ForestSizeResult {
    TuneResult sweep;
    int recommended = 0;
};

/// Smallest tree count whose validation MSE is within `tolerance` (relative)
/// of the minimum over `counts`.
ForestSizeResult select_forest_size(const TrainingData& data, const std::vector<int>& counts, const ForestParams& base,
                                    std::uint64_t master_seed, double tolerance = 0.01);

/// tune_heatmap.csv: axis1,axis2,validation_mse
void export_heatmap(const GridSpec& grid, const TuneResult& result, const std::filesystem::path& path);
/// tune_curves.csv: cell,epoch,train_mse,val_mse
void export_curves(const TuneResult& result, const std::filesystem::path& path);

}  // namespace parkcast
