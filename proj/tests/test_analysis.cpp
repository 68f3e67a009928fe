#include "helpers.hpp"

#include "parkcast/analysis.hpp"
#include "parkcast/error.hpp"

#include <doctest.h>

#include <cmath>

using namespace parkcast;
using doctest::Approx;

namespace {

struct Fixture {
    PreparedData data = testutil::prepared_city(21, 12, 2);
    TargetSets sets = build_target_sets(data, data.schema, Target::occupancy, HorizonGrid::standard(), 10, 5);
};

Fixture& fixture()
{
    static Fixture f;
    return f;
}

void flatten(SupervisedSet& set, const FeatureSchema& schema, FeatureCategory c)
{
    for (std::size_t col = 0; col < schema.width(); ++col)
        if (schema.features()[col].category == c)
            for (std::size_t r = 0; r < set.rows(); ++r)
                set.X(r, col) = 0.25;
}

}  // namespace

TEST_CASE("removing an uninformative category barely moves test error")
{
    auto& f = fixture();
    auto train = f.sets.train, val = f.sets.validation, test = f.sets.test;
    for (auto* s : {&train, &val, &test})
        flatten(*s, f.data.schema, FeatureCategory::weather);
    const auto cfg = testutil::quick_models();
    const auto report = feature_elimination_study(train, val, test, f.data.schema, ModelKind::forest, cfg);
    REQUIRE(report.rows.size() == 5);
    for (const auto& row : report.rows) {
        CHECK(row.delta == Approx(row.test_mse - report.reference_mse));
        CHECK(row.removed_width == f.data.schema.category_width(row.category));
        if (row.category == FeatureCategory::weather)
            CHECK(std::abs(row.delta) < 0.05 * report.reference_mse);
    }
    // Occupancy history carries most of the signal for occupancy forecasts.
    CHECK(report.most_damaging() == FeatureCategory::occupancy_lookback);

    const auto ref = train_artifact(ModelKind::forest, train, val, f.data.schema, cfg);
    const auto direct = evaluate(ref, test, [](Timestamp, int) { return 0.0; });
    CHECK(report.reference_mse == Approx(direct.pooled.mse));

    const auto dir = testutil::scratch_dir("analysis_export");
    export_elimination(report, dir / "features.csv");
    const auto text = testutil::slurp(dir / "features.csv");
    CHECK(text.rfind("category,test_mse,delta\nreference,", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 7);
}

TEST_CASE("halving keeps the most recent rows and level zero is the full model")
{
    auto& f = fixture();
    const auto cfg = testutil::quick_models();
    const auto naive = seasonal_naive_for(f.data.frame, Target::occupancy);
    const std::vector<TargetSplit> splits = {
        {f.sets.train, f.sets.validation, f.sets.test, f.data.schema, naive}};
    const auto rows = data_halving_study(splits, 3, ModelKind::forest, cfg);
    REQUIRE(rows.size() == 4);
    const std::size_t n = f.sets.train.rows();
    for (const auto& r : rows) {
        CHECK(r.rows == n / (std::size_t{1} << r.level));
        CHECK(r.target == Target::occupancy);
    }

    const auto full = train_artifact(ModelKind::forest, f.sets.train, f.sets.validation, f.data.schema, cfg);
    CHECK(rows[0].test_mase == Approx(*evaluate(full, f.sets.test, naive).pooled.mase));

    // Level 2 equals a model trained on exactly the last quarter.
    std::vector<std::size_t> tail;
    for (std::size_t i = n - n / 4; i < n; ++i)
        tail.push_back(i);
    const auto quarter = train_artifact(ModelKind::forest, f.sets.train.select(tail), f.sets.validation,
                                        f.data.schema, cfg);
    CHECK(rows[2].test_mase == Approx(*evaluate(quarter, f.sets.test, naive).pooled.mase));

    const auto dir = testutil::scratch_dir("analysis_halving");
    export_halving(rows, dir / "data.csv");
    const auto text = testutil::slurp(dir / "data.csv");
    CHECK(text.rfind("halving_level,rows,target,test_mase\n", 0) == 0);
    CHECK(text.find("\n3," + std::to_string(n / 8) + ",occupancy,") != std::string::npos);
}

TEST_CASE("halving past the data is refused")
{
    auto& f = fixture();
    std::vector<std::size_t> three = {0, 1, 2};
    const std::vector<TargetSplit> splits = {{f.sets.train.select(three), f.sets.validation, f.sets.test,
                                              f.data.schema, seasonal_naive_for(f.data.frame, Target::occupancy)}};
    try {
        data_halving_study(splits, 2, ModelKind::forest, testutil::quick_models());
        FAIL("expected TooFewRows");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::TooFewRows);
    }
}

TEST_CASE("deepest level beating the naive")
{
    const std::vector<HalvingRow> rows = {{0, 100, Target::occupancy, 0.4}, {1, 50, Target::occupancy, 0.7},
                                          {2, 25, Target::occupancy, 1.2}, {3, 12, Target::occupancy, 0.9},
                                          {0, 100, Target::influx, 1.1}};
    CHECK(deepest_level_beating_naive(rows, Target::occupancy) == 1);
    CHECK(deepest_level_beating_naive(rows, Target::influx) == -1);
    CHECK(deepest_level_beating_naive(rows, Target::outflux) == -1);
}
