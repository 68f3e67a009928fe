#include "parkcast/training.hpp"

#include "parkcast/error.hpp"
#include "parkcast/tune.hpp"

#include <memory>

namespace parkcast {

ModelArtifact train_artifact(ModelKind kind, const SupervisedSet& train, const SupervisedSet& validation,
                             const FeatureSchema& schema, const ModelConfig& config, nlohmann::json metadata)
{
    if (train.schema_digest != schema.digest() || validation.schema_digest != schema.digest())
        fail(ErrorCode::SchemaMismatch, "training sets were not encoded with the given schema");
    if (train.target != validation.target || train.horizons != validation.horizons)
        fail(ErrorCode::SchemaMismatch, "training and validation sets disagree on target or horizons");

    ModelArtifact a;
    a.kind = kind;
    a.schema = schema;
    a.target = train.target;
    a.horizons = train.horizons;
    if (!metadata.is_object())
        metadata = nlohmann::json::object();
    metadata["train_rows"] = train.rows();
    metadata["validation_rows"] = validation.rows();
    if (kind == ModelKind::mlp) {
        auto result = mlp_train(train.X, train.Y, validation.X, validation.Y, config.mlp);
        metadata["config"] = config.mlp;
        metadata["validation_mse"] = result.best_val_mse;
        metadata["best_epoch"] = result.best_epoch;
        a.model = std::move(result.model);
    } else {
        Forest f = forest_fit(train.X, train.Y, config.forest);
        metadata["config"] = config.forest;
        metadata["validation_mse"] = validation_mse(f, validation.X, validation.Y);
        a.model = std::move(f);
    }
    a.metadata = std::move(metadata);
    return a;
}

PreparedData prepare_data(const Dataset& dataset, const SignalConfig& signal, const SplitSpec& split)
{
    PreparedData d;
    d.frame = prepare_signals(dataset, signal);
    d.split = chronological_split(dataset, split);
    d.schema = fit_schema(d.frame, d.split.train);
    return d;
}

TargetSets build_target_sets(const PreparedData& data, const FeatureSchema& schema, Target target,
                             const HorizonGrid& horizons, int train_stride, int eval_stride)
{
    return {build_supervised(data.frame, schema, horizons, target, data.split.train, train_stride),
            build_supervised(data.frame, schema, horizons, target, data.split.validation, eval_stride),
            build_supervised(data.frame, schema, horizons, target, data.split.test, eval_stride)};
}

NaiveFn seasonal_naive_for(const SignalFrame& frame, Target target)
{
    auto naive = std::make_shared<SeasonalNaive>(frame.grid, target_series(frame, target));
    return [naive](Timestamp t, int h) { return naive->predict(t, h); };
}

HolidayCalendar holidays_of(const Dataset& dataset)
{
    HolidayCalendar cal;
    const auto& flags = dataset.exogenous.holiday;
    for (std::int64_t i = 0; i < dataset.grid.length; ++i)
        if (flags[static_cast<std::size_t>(i)] == 1.0)
            cal.days.insert(day_index(dataset.grid.at(i)));
    return cal;
}

}  // namespace parkcast
