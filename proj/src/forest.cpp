#include "parkcast/forest.hpp"

#include "parkcast/error.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <thread>

namespace parkcast {

std::size_t TreeParams::candidate_count(std::size_t n_features) const
{
    std::size_t k = n_features;
    switch (max_features) {
    case MaxFeatures::all: break;
    case MaxFeatures::sqrt: k = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(n_features)))); break;
    case MaxFeatures::half: k = n_features / 2; break;
    case MaxFeatures::fixed: k = static_cast<std::size_t>(std::max(fixed_features, 0)); break;
    }
    return std::clamp<std::size_t>(k, 1, std::max<std::size_t>(n_features, 1));
}

void ForestParams::validate() const
{
    if (n_trees < 1)
        fail(ErrorCode::InvalidConfig, "n_trees must be >= 1");
    if (max_depth < 1)
        fail(ErrorCode::InvalidConfig, "max_depth must be >= 1");
    if (min_samples_leaf < 1)
        fail(ErrorCode::InvalidConfig, "min_samples_leaf must be >= 1");
    if (max_features == MaxFeatures::fixed && fixed_features < 1)
        fail(ErrorCode::InvalidConfig, "fixed max_features must be >= 1");
}

std::string to_string(MaxFeatures mode, int fixed)
{
    switch (mode) {
    case MaxFeatures::all: return "all";
    case MaxFeatures::sqrt: return "sqrt";
    case MaxFeatures::half: return "half";
    case MaxFeatures::fixed: return std::to_string(fixed);
    }
    return "all";
}

std::pair<MaxFeatures, int> parse_max_features(const nlohmann::json& value)
{
    if (value.is_number_integer()) {
        const int k = value.get<int>();
        if (k < 1)
            fail(ErrorCode::InvalidConfig, "max_features count must be >= 1");
        return {MaxFeatures::fixed, k};
    }
    if (value.is_string()) {
        const auto s = value.get<std::string>();
        if (s == "all")
            return {MaxFeatures::all, 0};
        if (s == "sqrt")
            return {MaxFeatures::sqrt, 0};
        if (s == "half")
            return {MaxFeatures::half, 0};
        if (!s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; }))
            return parse_max_features(nlohmann::json(std::stoi(s)));
    }
    fail(ErrorCode::InvalidConfig, "max_features must be all, sqrt, half or a positive count");
}

void to_json(nlohmann::json& j, const ForestParams& p)
{
    j = {{"n_trees", p.n_trees},
         {"max_depth", p.max_depth},
         {"max_features", to_string(p.max_features, p.fixed_features)},
         {"min_samples_leaf", p.min_samples_leaf},
         {"bootstrap", p.bootstrap},
         {"seed", p.seed}};
}

void from_json(const nlohmann::json& j, ForestParams& p)
{
    p = ForestParams{};
    p.n_trees = j.value("n_trees", p.n_trees);
    p.max_depth = j.value("max_depth", p.max_depth);
    if (j.contains("max_features"))
        std::tie(p.max_features, p.fixed_features) = parse_max_features(j.at("max_features"));
    p.min_samples_leaf = j.value("min_samples_leaf", p.min_samples_leaf);
    p.bootstrap = j.value("bootstrap", p.bootstrap);
    p.seed = j.value("seed", p.seed);
    p.threads = j.value("threads", p.threads);
}

RegressionTree::RegressionTree(std::vector<Node> nodes, std::vector<double> leaf_values, std::size_t outputs)
    : nodes_(std::move(nodes)), leaf_values_(std::move(leaf_values)), outputs_(outputs)
{
}

std::span<const double> RegressionTree::predict(std::span<const double> x) const
{
    std::size_t i = 0;
    while (nodes_[i].feature >= 0) {
        const auto& n = nodes_[i];
        i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
    }
    return {leaf_values_.data() + static_cast<std::size_t>(nodes_[i].leaf) * outputs_, outputs_};
}

int RegressionTree::depth() const
{
    if (nodes_.empty())
        return 0;
    std::vector<std::pair<int, int>> stack{{0, 0}};
    int deepest = 0;
    while (!stack.empty()) {
        auto [i, d] = stack.back();
        stack.pop_back();
        deepest = std::max(deepest, d);
        const auto& n = nodes_[static_cast<std::size_t>(i)];
        if (n.feature >= 0) {
            stack.emplace_back(n.left, d + 1);
            stack.emplace_back(n.right, d + 1);
        }
    }
    return deepest;
}

namespace {

class TreeBuilder {
public:
    TreeBuilder(const Matrix& X, const Matrix& Y, const TreeParams& params, std::mt19937_64& rng,
                std::span<const std::size_t> samples)
        : params_(params), rng_(rng), n_features_(X.cols), outputs_(Y.cols)
    {
        const std::size_t m = samples.size();
        xs_.assign(n_features_, std::vector<double>(m));
        ys_.resize(m * outputs_);
        for (std::size_t p = 0; p < m; ++p) {
            const auto xr = X.row(samples[p]);
            for (std::size_t f = 0; f < n_features_; ++f)
                xs_[f][p] = xr[f];
            const auto yr = Y.row(samples[p]);
            std::copy(yr.begin(), yr.end(), ys_.begin() + static_cast<std::ptrdiff_t>(p * outputs_));
        }
        order_.assign(n_features_, std::vector<std::uint32_t>(m));
        for (std::size_t f = 0; f < n_features_; ++f) {
            auto& o = order_[f];
            std::iota(o.begin(), o.end(), 0u);
            const auto& col = xs_[f];
            std::stable_sort(o.begin(), o.end(), [&col](std::uint32_t a, std::uint32_t b) { return col[a] < col[b]; });
        }
        scratch_.resize(m);
        goes_left_.resize(m);
        features_.resize(n_features_);
        std::iota(features_.begin(), features_.end(), std::size_t{0});
    }

    RegressionTree build()
    {
        grow(0, order_.empty() ? 0 : order_[0].size(), 0);
        return RegressionTree(std::move(nodes_), std::move(leaves_), outputs_);
    }

private:
    struct Candidate {
        bool found = false;
        std::size_t feature = 0;
        double threshold = 0.0;
        double gain = 0.0;
    };

    int make_leaf(std::size_t lo, std::size_t hi)
    {
        RegressionTree::Node node;
        node.leaf = static_cast<int>(leaves_.size() / outputs_);
        const auto& o = order_[0];
        std::vector<double> mean(outputs_, 0.0);
        for (std::size_t i = lo; i < hi; ++i)
            for (std::size_t d = 0; d < outputs_; ++d)
                mean[d] += ys_[o[i] * outputs_ + d];
        for (auto& v : mean)
            v /= static_cast<double>(hi - lo);
        leaves_.insert(leaves_.end(), mean.begin(), mean.end());
        nodes_.push_back(node);
        return static_cast<int>(nodes_.size() - 1);
    }

    bool pure(std::size_t lo, std::size_t hi) const
    {
        const auto& o = order_[0];
        for (std::size_t d = 0; d < outputs_; ++d) {
            const double first = ys_[o[lo] * outputs_ + d];
            for (std::size_t i = lo + 1; i < hi; ++i)
                if (ys_[o[i] * outputs_ + d] != first)
                    return false;
        }
        return true;
    }

    Candidate best_split(std::size_t lo, std::size_t hi)
    {
        const std::size_t m = hi - lo;
        const auto& o0 = order_[0];
        std::vector<double> mean(outputs_, 0.0);
        for (std::size_t i = lo; i < hi; ++i)
            for (std::size_t d = 0; d < outputs_; ++d)
                mean[d] += ys_[o0[i] * outputs_ + d];
        for (auto& v : mean)
            v /= static_cast<double>(m);
        // Centered sums: the gain is then the between-children sum of squares.
        std::vector<double> total(outputs_, 0.0);
        double node_ss = 0.0;
        for (std::size_t i = lo; i < hi; ++i)
            for (std::size_t d = 0; d < outputs_; ++d) {
                const double c = ys_[o0[i] * outputs_ + d] - mean[d];
                total[d] += c;
                node_ss += c * c;
            }
        const double tolerance = 1e-12 * std::max(node_ss, 1e-300);

        std::vector<std::size_t> candidates;
        const std::size_t k = params_.candidate_count(n_features_);
        if (k >= n_features_) {
            candidates = features_;
        } else {
            std::vector<std::size_t> pool = features_;
            for (std::size_t i = 0; i < k; ++i) {
                std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
                std::swap(pool[i], pool[pick(rng_)]);
            }
            candidates.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
            std::sort(candidates.begin(), candidates.end());
        }

        const auto min_leaf = static_cast<std::size_t>(params_.min_samples_leaf);
        Candidate best;
        std::vector<double> left(outputs_);
        for (std::size_t f : candidates) {
            const auto& o = order_[f];
            const auto& col = xs_[f];
            std::fill(left.begin(), left.end(), 0.0);
            for (std::size_t i = lo; i + 1 < hi; ++i) {
                const std::uint32_t p = o[i];
                for (std::size_t d = 0; d < outputs_; ++d)
                    left[d] += ys_[p * outputs_ + d] - mean[d];
                const std::size_t n_left = i + 1 - lo;
                const std::size_t n_right = m - n_left;
                if (n_left < min_leaf)
                    continue;
                if (n_right < min_leaf)
                    break;
                const double a = col[p];
                const double b = col[o[i + 1]];
                if (!(a < b))
                    continue;
                double gain = 0.0;
                for (std::size_t d = 0; d < outputs_; ++d) {
                    const double r = total[d] - left[d];
                    gain += left[d] * left[d] / static_cast<double>(n_left) + r * r / static_cast<double>(n_right);
                }
                if (!best.found || gain > best.gain + tolerance) {
                    double threshold = std::midpoint(a, b);
                    if (!(threshold < b))
                        threshold = a;
                    best = {true, f, threshold, gain};
                }
            }
        }
        return best;
    }

    int grow(std::size_t lo, std::size_t hi, int depth)
    {
        const std::size_t m = hi - lo;
        const bool depth_reached = params_.max_depth >= 0 && depth >= params_.max_depth;
        if (depth_reached || m < 2 * static_cast<std::size_t>(params_.min_samples_leaf) || n_features_ == 0 ||
            pure(lo, hi))
            return make_leaf(lo, hi);
        const Candidate split = best_split(lo, hi);
        if (!split.found)
            return make_leaf(lo, hi);

        const auto& col = xs_[split.feature];
        std::size_t n_left = 0;
        for (std::size_t i = lo; i < hi; ++i) {
            const std::uint32_t p = order_[0][i];
            goes_left_[p] = col[p] <= split.threshold;
            n_left += goes_left_[p];
        }
        for (auto& o : order_) {
            std::size_t l = lo, r = lo + n_left;
            for (std::size_t i = lo; i < hi; ++i) {
                const std::uint32_t p = o[i];
                if (goes_left_[p])
                    scratch_[l++] = p;
                else
                    scratch_[r++] = p;
            }
            std::copy(scratch_.begin() + static_cast<std::ptrdiff_t>(lo), scratch_.begin() + static_cast<std::ptrdiff_t>(hi),
                      o.begin() + static_cast<std::ptrdiff_t>(lo));
        }

        const auto index = nodes_.size();
        nodes_.push_back({static_cast<int>(split.feature), split.threshold, -1, -1, -1});
        const int left = grow(lo, lo + n_left, depth + 1);
        const int right = grow(lo + n_left, hi, depth + 1);
        nodes_[index].left = left;
        nodes_[index].right = right;
        return static_cast<int>(index);
    }

    const TreeParams& params_;
    std::mt19937_64& rng_;
    std::size_t n_features_;
    std::size_t outputs_;
    std::vector<std::vector<double>> xs_;
    std::vector<double> ys_;
    std::vector<std::vector<std::uint32_t>> order_;
    std::vector<std::uint32_t> scratch_;
    std::vector<std::uint8_t> goes_left_;
    std::vector<std::size_t> features_;
    std::vector<RegressionTree::Node> nodes_;
    std::vector<double> leaves_;
};

}  // namespace

RegressionTree tree_fit(const Matrix& X, const Matrix& Y, const TreeParams& params, std::mt19937_64& rng,
                        std::span<const std::size_t> samples)
{
    if (X.rows == 0 || X.rows != Y.rows)
        fail(ErrorCode::ShapeMismatch, "tree_fit needs >= 1 sample with matching targets");
    std::vector<std::size_t> all;
    if (samples.empty()) {
        all.resize(X.rows);
        std::iota(all.begin(), all.end(), std::size_t{0});
        samples = all;
    }
    if (X.cols == 0)
        fail(ErrorCode::NoFeatures, "tree_fit needs at least one feature");
    TreeBuilder builder(X, Y, params, rng, samples);
    return builder.build();
}

Forest::Forest(std::vector<RegressionTree> trees, std::size_t outputs) : trees_(std::move(trees)), outputs_(outputs) {}

std::vector<double> Forest::predict(std::span<const double> x) const
{
    std::vector<double> out(outputs_, 0.0);
    for (const auto& t : trees_) {
        const auto p = t.predict(x);
        for (std::size_t d = 0; d < outputs_; ++d)
            out[d] += p[d];
    }
    for (auto& v : out)
        v /= static_cast<double>(trees_.size());
    return out;
}

Matrix Forest::predict_batch(const Matrix& X) const
{
    Matrix out(X.rows, outputs_);
    for (std::size_t r = 0; r < X.rows; ++r) {
        const auto p = predict(X.row(r));
        std::copy(p.begin(), p.end(), out.row(r).begin());
    }
    return out;
}

Forest forest_fit(const Matrix& X, const Matrix& Y, const ForestParams& params)
{
    params.validate();
    if (X.rows == 0 || X.rows != Y.rows)
        fail(ErrorCode::ShapeMismatch, "forest_fit needs >= 1 sample with matching targets");
    const auto n_trees = static_cast<std::size_t>(params.n_trees);
    std::vector<RegressionTree> trees(n_trees);
    const TreeParams tp = params.tree();

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n_trees; i = next++) {
            std::mt19937_64 rng(derive_seed(params.seed, i));
            std::vector<std::size_t> samples(X.rows);
            if (params.bootstrap) {
                std::uniform_int_distribution<std::size_t> pick(0, X.rows - 1);
                for (auto& s : samples)
                    s = pick(rng);
            } else {
                std::iota(samples.begin(), samples.end(), std::size_t{0});
            }
            trees[i] = tree_fit(X, Y, tp, rng, samples);
        }
    };
    std::size_t threads = params.threads > 0 ? static_cast<std::size_t>(params.threads)
                                             : std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, n_trees);
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t)
            pool.emplace_back(worker);
    }
    return Forest(std::move(trees), Y.cols);
}

std::vector<double> forest_predict(const Forest& forest, std::span<const double> x) { return forest.predict(x); }

}  // namespace parkcast
