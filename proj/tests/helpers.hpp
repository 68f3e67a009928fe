#pragma once

#include "parkcast/datamodel.hpp"
#include "parkcast/ingest.hpp"
#include "parkcast/training.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <unistd.h>

namespace testutil {

/// Fresh, empty scratch directory for one test.
inline std::filesystem::path scratch_dir(const std::string& name)
{
    auto dir = std::filesystem::temp_directory_path() /
               ("parkcast_" + name + "_" + std::to_string(static_cast<long>(::getpid())));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text)
{
    std::ofstream out(p, std::ios::binary);
    out << text;
}

inline parkcast::SyntheticCityConfig small_city(int days = 21, std::uint64_t seed = 3, int locations = 3)
{
    auto c = parkcast::SyntheticCityConfig::defaults();
    c.days = days;
    c.seed = seed;
    c.locations = locations;
    c.event_days.clear();
    c.holiday_days = {4};
    return c;
}

inline parkcast::Dataset dataset_of(const parkcast::SyntheticCity& city)
{
    const auto exo = parkcast::build_exogenous(city.traffic, city.weather, city.holidays, city.grid);
    return parkcast::assemble_dataset(city.ground_truth, exo, city.grid);
}

/// Signals, split and schema of a freshly generated small city.
inline parkcast::PreparedData prepared_city(int days = 21, std::uint64_t seed = 3, int locations = 3)
{
    const auto city = parkcast::generate_synthetic_city(small_city(days, seed, locations));
    return parkcast::prepare_data(dataset_of(city), parkcast::SignalConfig{}, parkcast::SplitSpec{});
}

inline parkcast::ModelConfig quick_models()
{
    parkcast::ModelConfig c;
    c.mlp.hidden = {16, 16};
    c.mlp.learning_rate = 3e-3;
    c.mlp.epochs = 15;
    c.mlp.batch_size = 64;
    c.forest.n_trees = 8;
    c.forest.max_depth = 8;
    return c;
}

inline parkcast::Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double lo = -1.0,
                                      double hi = 1.0)
{
    std::uniform_real_distribution<double> u(lo, hi);
    parkcast::Matrix m(rows, cols);
    for (auto& v : m.data)
        v = u(rng);
    return m;
}

}  // namespace testutil
