#pragma once

#include "parkcast/artifact.hpp"
#include "parkcast/eval.hpp"
#include "parkcast/ingest.hpp"

namespace parkcast {

struct ModelConfig {
    MlpTrainConfig mlp;
    ForestParams forest;
};

/// Trains one model of `kind` and packages it with its schema. Training
/// metadata (config, validation MSE, best epoch) is merged into `metadata`.
ModelArtifact train_artifact(ModelKind kind, const SupervisedSet& train, const SupervisedSet& validation,
                             const FeatureSchema& schema, const ModelConfig& config,
                             nlohmann::json metadata = nlohmann::json::object());

/// Signals, chronological split and a schema fitted on the training rows.
struct PreparedData {
    SignalFrame frame;
    Split split;
    FeatureSchema schema;
};

PreparedData prepare_data(const Dataset& dataset, const SignalConfig& signal, const SplitSpec& split);

struct TargetSets {
    SupervisedSet train;
    SupervisedSet validation;
    SupervisedSet test;
};

/// Training rows use `train_stride`; validation and test rows use `eval_stride`.
TargetSets build_target_sets(const PreparedData& data, const FeatureSchema& schema, Target target,
                             const HorizonGrid& horizons, int train_stride, int eval_stride);

/// Seasonal random walk over the target's full per-minute history.
NaiveFn seasonal_naive_for(const SignalFrame& frame, Target target);

/// Days flagged as holidays in the dataset.
HolidayCalendar holidays_of(const Dataset& dataset);

}  // namespace parkcast
