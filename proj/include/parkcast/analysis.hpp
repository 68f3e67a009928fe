#pragma once

#include "parkcast/eval.hpp"
#include "parkcast/training.hpp"

#include <filesystem>
#include <vector>

namespace parkcast {

struct EliminationRow {
    FeatureCategory category;
    std::size_t removed_width = 0;
    double test_mse = 0.0;
    double delta = 0.0;  // test_mse - reference
};

struct EliminationReport {
    double reference_mse = 0.0;
    std::vector<EliminationRow> rows;

    /// Category whose removal raised test MSE the most.
    FeatureCategory most_damaging() const;
};

/// Retrains without each category in turn, same seed and config as the
/// all-features reference, and compares test MSE.
EliminationReport feature_elimination_study(const SupervisedSet& train, const SupervisedSet& validation,
                                            const SupervisedSet& test, const FeatureSchema& schema, ModelKind kind,
                                            const ModelConfig& config);

/// Train/validation/test sets of one target plus the naive used to scale its errors.
struct TargetSplit {
    SupervisedSet train;
    SupervisedSet validation;
    SupervisedSet test;
    FeatureSchema schema;
    NaiveFn naive;
};

struct HalvingRow {
    int level = 0;
    std::size_t rows = 0;
    Target target = Target::occupancy;
    double test_mase = 0.0;
};

/// Level k keeps the most recent floor(n / 2^k) training rows; validation,
/// test and the naive stay fixed.
std::vector<HalvingRow> data_halving_study(std::span<const TargetSplit> targets, int levels, ModelKind kind,
                                           const ModelConfig& config);

/// Largest level L such that every level 0..L has MASE < 1 for `target`; -1 if level 0 fails.
int deepest_level_beating_naive(std::span<const HalvingRow> rows, Target target);

/// ablation_features.csv: category,test_mse,delta
void export_elimination(const EliminationReport& report, const std::filesystem::path& path);
/// ablation_data.csv: halving_level,rows,target,test_mase
void export_halving(std::span<const HalvingRow> rows, const std::filesystem::path& path);

}  // namespace parkcast
