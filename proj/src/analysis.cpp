#include "parkcast/analysis.hpp"

#include "parkcast/error.hpp"

#include <algorithm>
#include <fstream>
#include <map>

namespace parkcast {

FeatureCategory EliminationReport::most_damaging() const
{
    if (rows.empty())
        fail(ErrorCode::EmptyResult, "elimination report is empty");
    return std::max_element(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.delta < b.delta; })
        ->category;
}

namespace {

double test_mse(const ModelArtifact& model, const SupervisedSet& test)
{
    const Matrix pred = model.predict_batch(test);
    return mse(pred.data, test.Y.data);
}

}  // namespace

EliminationReport feature_elimination_study(const SupervisedSet& train, const SupervisedSet& validation,
                                            const SupervisedSet& test, const FeatureSchema& schema, ModelKind kind,
                                            const ModelConfig& config)
{
    EliminationReport report;
    report.reference_mse = test_mse(train_artifact(kind, train, validation, schema, config), test);
    for (auto category : kAllCategories) {
        if (!schema.has_category(category))
            continue;
        auto [tr, reduced] = eliminate_category(train, schema, category);
        auto va = eliminate_category(validation, schema, category).first;
        auto te = eliminate_category(test, schema, category).first;
        const double m = test_mse(train_artifact(kind, tr, va, reduced, config), te);
        report.rows.push_back({category, schema.category_width(category), m, m - report.reference_mse});
    }
    return report;
}

std::vector<HalvingRow> data_halving_study(std::span<const TargetSplit> targets, int levels, ModelKind kind,
                                           const ModelConfig& config)
{
    if (levels < 0)
        fail(ErrorCode::InvalidConfig, "halving levels must be >= 0");
    std::vector<HalvingRow> rows;
    for (const auto& split : targets) {
        const std::size_t n = split.train.rows();
        for (int level = 0; level <= levels; ++level) {
            const std::size_t keep = n >> level;
            if (keep == 0)
                fail(ErrorCode::TooFewRows, "halving level " + std::to_string(level) + " leaves no training rows");
            std::vector<std::size_t> suffix(keep);
            for (std::size_t i = 0; i < keep; ++i)
                suffix[i] = n - keep + i;
            const SupervisedSet subset = split.train.select(suffix);
            const auto model = train_artifact(kind, subset, split.validation, split.schema, config);
            const auto report = evaluate(model, split.test, split.naive);
            rows.push_back({level, keep, split.train.target,
                            report.pooled.mase ? *report.pooled.mase : std::numeric_limits<double>::infinity()});
        }
    }
    return rows;
}

int deepest_level_beating_naive(std::span<const HalvingRow> rows, Target target)
{
    std::map<int, double> by_level;
    for (const auto& r : rows)
        if (r.target == target)
            by_level[r.level] = r.test_mase;
    int deepest = -1;
    for (const auto& [level, m] : by_level) {
        if (level != deepest + 1 || !(m < 1.0))
            break;
        deepest = level;
    }
    return deepest;
}

void export_elimination(const EliminationReport& report, const std::filesystem::path& path)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out)
        fail(ErrorCode::IoError, "cannot write " + path.string());
    out << "category,test_mse,delta\n";
    out << "reference," << format_double(report.reference_mse) << ",0\n";
    for (const auto& r : report.rows)
        out << to_string(r.category) << ',' << format_double(r.test_mse) << ',' << format_double(r.delta) << '\n';
}

void export_halving(std::span<const HalvingRow> rows, const std::filesystem::path& path)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out)
        fail(ErrorCode::IoError, "cannot write " + path.string());
    out << "halving_level,rows,target,test_mase\n";
    for (const auto& r : rows)
        out << r.level << ',' << r.rows << ',' << to_string(r.target) << ',' << format_double(r.test_mase) << '\n';
}

}  // namespace parkcast
