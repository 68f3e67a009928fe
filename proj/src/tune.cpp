#include "parkcast/tune.hpp"

#include "parkcast/error.hpp"
#include "parkcast/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace parkcast {

void GridSpec::validate() const
{
    if (axes.empty())
        fail(ErrorCode::InvalidConfig, "grid needs at least one axis");
    for (const auto& a : axes)
        if (a.values.empty())
            fail(ErrorCode::InvalidConfig, "grid axis '" + a.name + "' has no values");
}

std::size_t GridSpec::cell_count() const
{
    std::size_t n = 1;
    for (const auto& a : axes)
        n *= a.values.size();
    return n;
}

nlohmann::json GridSpec::cell(std::size_t index) const
{
    nlohmann::json out = nlohmann::json::object();
    for (std::size_t i = axes.size(); i-- > 0;) {
        const auto& a = axes[i];
        out[a.name] = a.values[index % a.values.size()];
        index /= a.values.size();
    }
    return out;
}

const TuneCell& TuneResult::best_cell() const
{
    if (!best)
        fail(ErrorCode::EmptyResult, "no grid cell trained successfully");
    return cells[*best];
}

MlpTrainConfig apply_cell(MlpTrainConfig base, const nlohmann::json& cell)
{
    int neurons = 0, layers = static_cast<int>(base.hidden.size());
    for (auto it = cell.begin(); it != cell.end(); ++it) {
        const auto& key = it.key();
        if (key == "neurons")
            neurons = it->get<int>();
        else if (key == "layers")
            layers = it->get<int>();
        else if (key == "learning_rate")
            base.learning_rate = it->get<double>();
        else if (key == "epochs")
            base.epochs = it->get<int>();
        else if (key == "batch_size")
            base.batch_size = it->get<int>();
        else
            fail(ErrorCode::InvalidConfig, "unknown ffnn grid axis '" + key + "'");
    }
    if (cell.contains("neurons") || cell.contains("layers")) {
        if (neurons == 0) {
            for (int w : base.hidden)
                neurons += w;
        }
        base.hidden = split_neurons(neurons, layers);
    }
    return base;
}

ForestParams apply_cell(ForestParams base, const nlohmann::json& cell)
{
    for (auto it = cell.begin(); it != cell.end(); ++it) {
        const auto& key = it.key();
        if (key == "n_trees")
            base.n_trees = it->get<int>();
        else if (key == "max_depth")
            base.max_depth = it->get<int>();
        else if (key == "max_features")
            std::tie(base.max_features, base.fixed_features) = parse_max_features(*it);
        else if (key == "min_samples_leaf")
            base.min_samples_leaf = it->get<int>();
        else
            fail(ErrorCode::InvalidConfig, "unknown rf grid axis '" + key + "'");
    }
    return base;
}

double validation_mse(const Forest& forest, const Matrix& X_val, const Matrix& Y_val)
{
    const Matrix pred = forest.predict_batch(X_val);
    return mse(pred.data, Y_val.data);
}

TuneResult grid_search(const TrainingData& data, const GridSpec& grid, ModelKind kind, const MlpTrainConfig& mlp_base,
                       const ForestParams& forest_base, std::uint64_t master_seed)
{
    grid.validate();
    TuneResult result;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < grid.cell_count(); ++i) {
        TuneCell cell;
        cell.index = i;
        cell.values = grid.cell(i);
        cell.seed = derive_seed(master_seed, i);
        try {
            if (kind == ModelKind::mlp) {
                MlpTrainConfig cfg = apply_cell(mlp_base, cell.values);
                cfg.seed = cell.seed;
                auto trained = mlp_train(data.X_train, data.Y_train, data.X_val, data.Y_val, cfg);
                cell.val_mse = trained.best_val_mse;
                cell.curve = std::move(trained.curve);
            } else {
                ForestParams p = apply_cell(forest_base, cell.values);
                p.seed = cell.seed;
                cell.val_mse = validation_mse(forest_fit(data.X_train, data.Y_train, p), data.X_val, data.Y_val);
            }
            if (cell.val_mse < best) {
                best = cell.val_mse;
                result.best = i;
            }
        } catch (const Error& e) {
            if (e.code() != ErrorCode::Divergence)
                throw;
            cell.error = std::string(to_string(e.code())) + ": " + e.what();
            cell.val_mse = std::numeric_limits<double>::quiet_NaN();
        }
        result.cells.push_back(std::move(cell));
    }
    return result;
}

ForestSizeResult select_forest_size(const TrainingData& data, const std::vector<int>& counts, const ForestParams& base,
                                    std::uint64_t master_seed, double tolerance)
{
    if (counts.empty())
        fail(ErrorCode::InvalidConfig, "tree counts must be non-empty");
    if (!std::is_sorted(counts.begin(), counts.end()) ||
        std::adjacent_find(counts.begin(), counts.end()) != counts.end())
        fail(ErrorCode::InvalidConfig, "tree counts must be strictly ascending");

    // All counts share the master seed, so each larger forest extends the smaller ones.
    ForestSizeResult out;
    ForestParams p = base;
    p.seed = master_seed;
    p.n_trees = counts.back();
    const Forest full = forest_fit(data.X_train, data.Y_train, p);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < counts.size(); ++i) {
        std::vector<RegressionTree> trees(full.trees().begin(), full.trees().begin() + counts[i]);
        const Forest subset(std::move(trees), full.outputs());
        TuneCell cell;
        cell.index = i;
        cell.values = {{"n_trees", counts[i]}};
        cell.seed = master_seed;
        cell.val_mse = validation_mse(subset, data.X_val, data.Y_val);
        if (cell.val_mse < best) {
            best = cell.val_mse;
            out.sweep.best = i;
        }
        out.sweep.cells.push_back(std::move(cell));
    }
    for (const auto& c : out.sweep.cells) {
        if (c.val_mse <= best * (1.0 + tolerance)) {
            out.recommended = c.values.at("n_trees").get<int>();
            break;
        }
    }
    return out;
}

namespace {

std::string cell_text(const nlohmann::json& v)
{
    if (v.is_string())
        return v.get<std::string>();
    if (v.is_number_float())
        return format_double(v.get<double>());
    return v.dump();
}

std::ofstream open_csv(const std::filesystem::path& path)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out)
        fail(ErrorCode::IoError, "cannot write " + path.string());
    return out;
}

}  // namespace

void export_heatmap(const GridSpec& grid, const TuneResult& result, const std::filesystem::path& path)
{
    auto out = open_csv(path);
    out << "axis1,axis2,validation_mse\n";
    for (const auto& c : result.cells) {
        const std::string a1 = grid.axes.empty() ? "" : cell_text(c.values.at(grid.axes[0].name));
        std::string a2;
        for (std::size_t i = 1; i < grid.axes.size(); ++i) {
            if (i > 1)
                a2 += ';';
            a2 += cell_text(c.values.at(grid.axes[i].name));
        }
        out << a1 << ',' << a2 << ',' << (c.error ? std::string("nan") : format_double(c.val_mse)) << '\n';
    }
}

void export_curves(const TuneResult& result, const std::filesystem::path& path)
{
    auto out = open_csv(path);
    out << "cell,epoch,train_mse,val_mse\n";
    for (const auto& c : result.cells)
        for (const auto& e : c.curve)
            out << c.index << ',' << e.epoch << ',' << format_double(e.train_mse) << ',' << format_double(e.val_mse) << '\n';
}

}  // namespace parkcast
