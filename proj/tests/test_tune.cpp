#include "helpers.hpp"

#include "parkcast/error.hpp"
#include "parkcast/tune.hpp"

#include <doctest.h>

#include <algorithm>

using namespace parkcast;
using doctest::Approx;

namespace {

struct Data {
    Matrix Xt, Yt, Xv, Yv;
    TrainingData view() const { return {Xt, Yt, Xv, Yv}; }
};

Data make_data()
{
    std::mt19937_64 rng(17);
    Data d;
    d.Xt = testutil::random_matrix(300, 4, rng);
    d.Xv = testutil::random_matrix(100, 4, rng);
    auto fill = [](const Matrix& X) {
        Matrix Y(X.rows, 2);
        for (std::size_t r = 0; r < X.rows; ++r) {
            Y(r, 0) = X(r, 0) * X(r, 1) + 0.5 * X(r, 2);
            Y(r, 1) = std::abs(X(r, 3));
        }
        return Y;
    };
    d.Yt = fill(d.Xt);
    d.Yv = fill(d.Xv);
    return d;
}

GridSpec grid(std::vector<GridAxis> axes) { return GridSpec{std::move(axes)}; }

}  // namespace

TEST_CASE("grid cells enumerate the cartesian product")
{
    const auto g = grid({{"max_depth", {2, 4, 6}}, {"max_features", {"all", "sqrt"}}});
    CHECK(g.cell_count() == 6);
    CHECK(g.cell(0) == nlohmann::json{{"max_depth", 2}, {"max_features", "all"}});
    CHECK(g.cell(1) == nlohmann::json{{"max_depth", 2}, {"max_features", "sqrt"}});
    CHECK(g.cell(5) == nlohmann::json{{"max_depth", 6}, {"max_features", "sqrt"}});
    CHECK_THROWS_AS(grid({}).validate(), Error);
    CHECK_THROWS_AS(grid({{"max_depth", {}}}).validate(), Error);
}

TEST_CASE("a one-cell grid picks that cell")
{
    const auto d = make_data();
    ForestParams base;
    base.n_trees = 5;
    const auto r = grid_search(d.view(), grid({{"max_depth", {3}}}), ModelKind::forest, {}, base, 1);
    REQUIRE(r.best);
    CHECK(*r.best == 0);
    CHECK(r.best_cell().values.at("max_depth") == 3);
}

TEST_CASE("ties go to the lowest cell index")
{
    const auto d = make_data();
    ForestParams base;
    base.n_trees = 3;
    base.bootstrap = false;  // seed-independent trees make the cells identical
    const auto r = grid_search(d.view(), grid({{"max_depth", {4, 4, 4}}}), ModelKind::forest, {}, base, 9);
    CHECK(r.cells[0].val_mse == r.cells[2].val_mse);
    CHECK(*r.best == 0);
}

TEST_CASE("best cell is the minimum and retraining reproduces it")
{
    const auto d = make_data();
    ForestParams base;
    base.n_trees = 6;
    const auto g = grid({{"max_depth", {1, 3, 8}}, {"max_features", {"all", "half"}}});
    const auto r = grid_search(d.view(), g, ModelKind::forest, {}, base, 21);
    const auto best = std::min_element(r.cells.begin(), r.cells.end(),
                                       [](const auto& a, const auto& b) { return a.val_mse < b.val_mse; });
    CHECK(*r.best == best->index);
    for (const auto& c : r.cells)
        CHECK(c.seed == derive_seed(21, c.index));

    auto p = apply_cell(base, r.best_cell().values);
    p.seed = r.best_cell().seed;
    CHECK(validation_mse(forest_fit(d.Xt, d.Yt, p), d.Xv, d.Yv) == r.best_cell().val_mse);

    MlpTrainConfig mb;
    mb.epochs = 20;
    mb.batch_size = 32;
    const auto g2 = grid({{"neurons", {8, 16}}, {"layers", {1, 2}}, {"learning_rate", {1e-2}}});
    const auto m = grid_search(d.view(), g2, ModelKind::mlp, mb, {}, 4);
    REQUIRE(m.cells.size() == 4);
    auto cfg = apply_cell(mb, m.best_cell().values);
    cfg.seed = m.best_cell().seed;
    CHECK(mlp_train(d.Xt, d.Yt, d.Xv, d.Yv, cfg).best_val_mse == m.best_cell().val_mse);
    for (const auto& c : m.cells)
        CHECK(c.curve.size() == 20);

    CHECK_THROWS_AS(grid_search(d.view(), grid({{"momentum", {0.9}}}), ModelKind::mlp, mb, {}, 1), Error);
}

TEST_CASE("diverging cells are recorded and skipped")
{
    const auto d = make_data();
    MlpTrainConfig mb;
    mb.epochs = 30;
    mb.optimizer = Optimizer::sgd;
    const auto r = grid_search(d.view(), grid({{"learning_rate", {1e8, 1e-2}}}), ModelKind::mlp, mb, {}, 2);
    CHECK(r.cells[0].error);
    CHECK_FALSE(r.cells[1].error);
    CHECK(*r.best == 1);
}

TEST_CASE("forest size selection")
{
    const auto d = make_data();
    ForestParams base;
    base.max_depth = 6;
    const auto single = select_forest_size(d.view(), {1}, base, 3);
    CHECK(single.recommended == 1);

    const auto r = select_forest_size(d.view(), {1, 5, 10, 25, 50}, base, 3);
    double lowest = 1e300;
    for (const auto& c : r.sweep.cells)
        lowest = std::min(lowest, c.val_mse);
    // Smallest count within one percent of the best.
    int expected = 0;
    for (const auto& c : r.sweep.cells)
        if (c.val_mse <= lowest * 1.01) {
            expected = c.values.at("n_trees").get<int>();
            break;
        }
    CHECK(r.recommended == expected);
    CHECK(r.sweep.cells.front().val_mse > lowest);

    // A generous tolerance lets the smallest count through.
    CHECK(select_forest_size(d.view(), {1, 5, 10, 25, 50}, base, 3, 10.0).recommended == 1);
    CHECK_THROWS_AS(select_forest_size(d.view(), {}, base, 3), Error);
    CHECK_THROWS_AS(select_forest_size(d.view(), {5, 1}, base, 3), Error);
}

TEST_CASE("heatmap and curve exports")
{
    const auto d = make_data();
    ForestParams base;
    base.n_trees = 2;
    const auto g = grid({{"max_depth", {2, 5}}, {"max_features", {"all", "sqrt", "half"}}});
    const auto r = grid_search(d.view(), g, ModelKind::forest, {}, base, 1);
    const auto dir = testutil::scratch_dir("tune_export");
    export_heatmap(g, r, dir / "heat.csv");
    const auto text = testutil::slurp(dir / "heat.csv");
    CHECK(text.rfind("axis1,axis2,validation_mse\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 7);
    CHECK(text.find("\n5,half,") != std::string::npos);

    MlpTrainConfig mb;
    mb.epochs = 4;
    const auto m = grid_search(d.view(), grid({{"neurons", {4, 6}}}), ModelKind::mlp, mb, {}, 1);
    export_curves(m, dir / "curves.csv");
    const auto curves = testutil::slurp(dir / "curves.csv");
    CHECK(std::count(curves.begin(), curves.end(), '\n') == 1 + 2 * 4);
}
