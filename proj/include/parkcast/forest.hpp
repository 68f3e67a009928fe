#pragma once

#include "parkcast/util.hpp"

#include <json.hpp>

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace parkcast {

enum class MaxFeatures { all, sqrt, half, fixed };

struct TreeParams {
    int max_depth = -1;  // < 0: unlimited
    int min_samples_leaf = 1;
    MaxFeatures max_features = MaxFeatures::all;
    int fixed_features = 0;  // used when max_features == fixed

    std::size_t candidate_count(std::size_t n_features) const;
};

struct ForestParams {
    int n_trees = 50;
    int max_depth = 12;
    MaxFeatures max_features = MaxFeatures::all;
    int fixed_features = 0;
    int min_samples_leaf = 1;
    bool bootstrap = true;
    std::uint64_t seed = 1;
    int threads = 0;  // 0: hardware concurrency

    TreeParams tree() const { return {max_depth, min_samples_leaf, max_features, fixed_features}; }
    void validate() const;
};

std::string to_string(MaxFeatures mode, int fixed = 0);
/// "all", "sqrt", "half" or a positive integer count.
std::pair<MaxFeatures, int> parse_max_features(const nlohmann::json& value);

void to_json(nlohmann::json& j, const ForestParams& p);
void from_json(const nlohmann::json& j, ForestParams& p);

/// Multi-output CART regression tree. Samples with x[feature] <= threshold go left.
class RegressionTree {
public:
    struct Node {
        int feature = -1;  // -1 marks a leaf
        double threshold = 0.0;
        int left = -1;
        int right = -1;
        int leaf = -1;  // row in the leaf-value table
    };

    RegressionTree() = default;
    RegressionTree(std::vector<Node> nodes, std::vector<double> leaf_values, std::size_t outputs);

    std::span<const double> predict(std::span<const double> x) const;
    const std::vector<Node>& nodes() const { return nodes_; }
    const std::vector<double>& leaf_values() const { return leaf_values_; }
    std::size_t outputs() const { return outputs_; }
    std::size_t leaf_count() const { return outputs_ == 0 ? 0 : leaf_values_.size() / outputs_; }
    int depth() const;

private:
    std::vector<Node> nodes_;
    std::vector<double> leaf_values_;
    std::size_t outputs_ = 0;
};

/// Greedy CART minimising the children's summed squared deviation over all
/// outputs. Candidate thresholds are midpoints between consecutive distinct
/// values; ties go to the lowest feature index, then the lowest threshold.
/// `samples` may repeat indices (bootstrap); empty means all rows.
RegressionTree tree_fit(const Matrix& X, const Matrix& Y, const TreeParams& params, std::mt19937_64& rng,
                        std::span<const std::size_t> samples = {});

class Forest {
public:
    Forest() = default;
    Forest(std::vector<RegressionTree> trees, std::size_t outputs);

    std::vector<double> predict(std::span<const double> x) const;
    Matrix predict_batch(const Matrix& X) const;
    const std::vector<RegressionTree>& trees() const { return trees_; }
    std::size_t outputs() const { return outputs_; }

private:
    std::vector<RegressionTree> trees_;
    std::size_t outputs_ = 0;
};

/// Tree i uses the seed derive_seed(params.seed, i), so results do not depend
/// on how trees are scheduled across threads.
Forest forest_fit(const Matrix& X, const Matrix& Y, const ForestParams& params);
std::vector<double> forest_predict(const Forest& forest, std::span<const double> x);

}  // namespace parkcast
