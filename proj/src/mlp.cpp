#include "parkcast/mlp.hpp"

#include "parkcast/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace parkcast {

std::string_view to_string(Activation a) noexcept
{
    switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
    }
    return "unknown";
}

Activation parse_activation(std::string_view name)
{
    if (name == "relu")
        return Activation::relu;
    if (name == "tanh")
        return Activation::tanh;
    if (name == "sigmoid")
        return Activation::sigmoid;
    fail(ErrorCode::InvalidConfig, "unknown activation '" + std::string(name) + "'");
}

namespace {

void check_widths(const std::vector<int>& widths)
{
    if (widths.size() < 2)
        fail(ErrorCode::ShapeMismatch, "network needs at least an input and an output layer");
    for (int w : widths)
        if (w < 1)
            fail(ErrorCode::ShapeMismatch, "layer widths must be >= 1");
}

void activate(Activation a, Eigen::MatrixXd& z)
{
    switch (a) {
    case Activation::relu: z = z.cwiseMax(0.0); break;
    case Activation::tanh: z = z.array().tanh().matrix(); break;
    case Activation::sigmoid: z = (1.0 / (1.0 + (-z.array()).exp())).matrix(); break;
    }
}

// Derivative expressed through the activation output.
Eigen::MatrixXd activation_slope(Activation a, const Eigen::MatrixXd& out)
{
    switch (a) {
    case Activation::relu: return (out.array() > 0.0).cast<double>().matrix();
    case Activation::tanh: return (1.0 - out.array().square()).matrix();
    case Activation::sigmoid: return (out.array() * (1.0 - out.array())).matrix();
    }
    return {};
}

}  // namespace

MlpParams MlpParams::zeros(std::vector<int> widths, Activation hidden)
{
    check_widths(widths);
    MlpParams p;
    p.widths = std::move(widths);
    p.hidden = hidden;
    for (std::size_t l = 0; l + 1 < p.widths.size(); ++l) {
        p.weights.push_back(Eigen::MatrixXd::Zero(p.widths[l + 1], p.widths[l]));
        p.biases.push_back(Eigen::VectorXd::Zero(p.widths[l + 1]));
    }
    return p;
}

MlpParams MlpParams::init(std::vector<int> widths, Activation hidden, std::uint64_t seed)
{
    MlpParams p = zeros(std::move(widths), hidden);
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        const double fan_in = p.widths[l];
        const double limit = hidden == Activation::relu ? std::sqrt(6.0 / fan_in) : std::sqrt(3.0 / fan_in);
        std::uniform_real_distribution<double> dist(-limit, limit);
        auto& w = p.weights[l];
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c)
                w(r, c) = dist(rng);
    }
    return p;
}

std::size_t MlpParams::parameter_count() const
{
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l)
        n += static_cast<std::size_t>(weights[l].size() + biases[l].size());
    return n;
}

bool MlpParams::all_finite() const
{
    for (std::size_t l = 0; l < weights.size(); ++l)
        if (!weights[l].allFinite() || !biases[l].allFinite())
            return false;
    return true;
}

Eigen::MatrixXd mlp_forward_batch(const MlpParams& params, const Eigen::MatrixXd& X)
{
    if (static_cast<std::size_t>(X.cols()) != params.input_width())
        fail(ErrorCode::ShapeMismatch, "input width " + std::to_string(X.cols()) + " != network input " +
                                           std::to_string(params.input_width()));
    Eigen::MatrixXd a = X;
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
        Eigen::MatrixXd z = a * params.weights[l].transpose();
        z.rowwise() += params.biases[l].transpose();
        if (l + 1 < params.weights.size())
            activate(params.hidden, z);
        a = std::move(z);
    }
    return a;
}

std::vector<double> mlp_forward(const MlpParams& params, std::span<const double> x)
{
    if (x.size() != params.input_width())
        fail(ErrorCode::ShapeMismatch, "input width " + std::to_string(x.size()) + " != network input " +
                                           std::to_string(params.input_width()));
    Eigen::VectorXd a = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
        Eigen::VectorXd z = params.weights[l] * a + params.biases[l];
        if (l + 1 < params.weights.size()) {
            Eigen::MatrixXd zm = z;
            activate(params.hidden, zm);
            z = zm;
        }
        a = std::move(z);
    }
    return {a.data(), a.data() + a.size()};
}

double mlp_loss(const MlpParams& params, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y)
{
    const Eigen::MatrixXd out = mlp_forward_batch(params, X);
    if (out.rows() != Y.rows() || out.cols() != Y.cols())
        fail(ErrorCode::ShapeMismatch, "target shape does not match network output");
    if (Y.rows() == 0)
        fail(ErrorCode::EmptyInput, "empty batch");
    return (out - Y).squaredNorm() / static_cast<double>(Y.size());
}

double mlp_gradient(const MlpParams& params, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                    MlpGradients& grads)
{
    if (X.rows() == 0)
        fail(ErrorCode::EmptyInput, "empty batch");
    if (static_cast<std::size_t>(X.cols()) != params.input_width() || Y.rows() != X.rows() ||
        static_cast<std::size_t>(Y.cols()) != params.output_width())
        fail(ErrorCode::ShapeMismatch, "batch shape does not match the network");

    const std::size_t layers = params.weights.size();
    std::vector<Eigen::MatrixXd> acts;
    acts.reserve(layers + 1);
    acts.push_back(X);
    for (std::size_t l = 0; l < layers; ++l) {
        Eigen::MatrixXd z = acts.back() * params.weights[l].transpose();
        z.rowwise() += params.biases[l].transpose();
        if (l + 1 < layers)
            activate(params.hidden, z);
        acts.push_back(std::move(z));
    }

    const Eigen::MatrixXd residual = acts.back() - Y;
    const double n = static_cast<double>(Y.size());
    const double loss = residual.squaredNorm() / n;

    grads.weights.resize(layers);
    grads.biases.resize(layers);
    Eigen::MatrixXd delta = residual * (2.0 / n);
    for (std::size_t l = layers; l-- > 0;) {
        grads.weights[l].noalias() = delta.transpose() * acts[l];
        grads.biases[l] = delta.colwise().sum().transpose();
        if (l > 0) {
            Eigen::MatrixXd back = delta * params.weights[l];
            delta = back.cwiseProduct(activation_slope(params.hidden, acts[l]));
        }
    }
    return loss;
}

std::vector<int> split_neurons(int total, int layers)
{
    if (layers < 1 || total < layers)
        fail(ErrorCode::InvalidConfig, "need at least one neuron per hidden layer");
    std::vector<int> widths(static_cast<std::size_t>(layers), total / layers);
    for (int i = 0; i < total % layers; ++i)
        ++widths[static_cast<std::size_t>(i)];
    return widths;
}

void MlpTrainConfig::validate() const
{
    if (!(learning_rate > 0.0))
        fail(ErrorCode::InvalidConfig, "learning_rate must be > 0");
    if (epochs < 1)
        fail(ErrorCode::InvalidConfig, "epochs must be >= 1");
    if (batch_size < 1)
        fail(ErrorCode::InvalidConfig, "batch_size must be >= 1");
    for (int w : hidden)
        if (w < 1)
            fail(ErrorCode::InvalidConfig, "hidden widths must be >= 1");
}

void to_json(nlohmann::json& j, const MlpTrainConfig& c)
{
    j = {{"hidden", c.hidden},
         {"activation", to_string(c.activation)},
         {"learning_rate", c.learning_rate},
         {"epochs", c.epochs},
         {"batch_size", c.batch_size},
         {"seed", c.seed},
         {"checkpointing", c.checkpointing},
         {"optimizer", c.optimizer == Optimizer::adam ? "adam" : "sgd"},
         {"beta1", c.beta1},
         {"beta2", c.beta2},
         {"epsilon", c.epsilon}};
}

void from_json(const nlohmann::json& j, MlpTrainConfig& c)
{
    c = MlpTrainConfig{};
    if (j.contains("hidden"))
        j.at("hidden").get_to(c.hidden);
    if (j.contains("neurons") || j.contains("layers"))
        c.hidden = split_neurons(j.value("neurons", 90), j.value("layers", 4));
    if (j.contains("activation"))
        c.activation = parse_activation(j.at("activation").get<std::string>());
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.checkpointing = j.value("checkpointing", c.checkpointing);
    if (j.contains("optimizer")) {
        const auto name = j.at("optimizer").get<std::string>();
        if (name != "adam" && name != "sgd")
            fail(ErrorCode::InvalidConfig, "optimizer must be adam or sgd");
        c.optimizer = name == "adam" ? Optimizer::adam : Optimizer::sgd;
    }
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.epsilon = j.value("epsilon", c.epsilon);
}

Eigen::MatrixXd to_eigen(const Matrix& m)
{
    Eigen::MatrixXd out(static_cast<Eigen::Index>(m.rows), static_cast<Eigen::Index>(m.cols));
    for (std::size_t r = 0; r < m.rows; ++r)
        for (std::size_t c = 0; c < m.cols; ++c)
            out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = m(r, c);
    return out;
}

std::vector<double> MlpModel::predict(std::span<const double> x) const
{
    auto out = mlp_forward(params, x);
    for (std::size_t k = 0; k < out.size(); ++k)
        out[k] = out[k] * target_scale + target_offset[k];
    return out;
}

Matrix MlpModel::predict_batch(const Matrix& X) const
{
    const Eigen::MatrixXd out = mlp_forward_batch(params, to_eigen(X));
    Matrix result(X.rows, params.output_width());
    for (std::size_t r = 0; r < X.rows; ++r)
        for (std::size_t k = 0; k < result.cols; ++k)
            result(r, k) = out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) * target_scale + target_offset[k];
    return result;
}

namespace {

struct AdamState {
    std::vector<Eigen::MatrixXd> mw, vw;
    std::vector<Eigen::VectorXd> mb, vb;
    long step = 0;
};

}  // namespace

MlpTrainResult mlp_train(const Matrix& X_train, const Matrix& Y_train, const Matrix& X_val, const Matrix& Y_val,
                         const MlpTrainConfig& config)
{
    config.validate();
    if (X_train.rows == 0 || X_val.rows == 0)
        fail(ErrorCode::EmptyInput, "training and validation sets must be non-empty");
    if (X_train.rows != Y_train.rows || X_val.rows != Y_val.rows || X_train.cols != X_val.cols ||
        Y_train.cols != Y_val.cols)
        fail(ErrorCode::ShapeMismatch, "training and validation sets disagree in shape");

    const auto n = static_cast<Eigen::Index>(X_train.rows);
    const auto outputs = static_cast<Eigen::Index>(Y_train.cols);

    // Standardize targets: per-output mean, one shared scale.
    std::vector<double> offset(static_cast<std::size_t>(outputs), 0.0);
    for (std::size_t r = 0; r < Y_train.rows; ++r)
        for (std::size_t k = 0; k < Y_train.cols; ++k)
            offset[k] += Y_train(r, k);
    for (auto& o : offset)
        o /= static_cast<double>(Y_train.rows);
    double ss = 0.0;
    for (std::size_t r = 0; r < Y_train.rows; ++r)
        for (std::size_t k = 0; k < Y_train.cols; ++k)
            ss += (Y_train(r, k) - offset[k]) * (Y_train(r, k) - offset[k]);
    double scale = std::sqrt(ss / static_cast<double>(Y_train.data.size()));
    if (!(scale > 0.0))
        scale = 1.0;

    const Eigen::MatrixXd X = to_eigen(X_train);
    Eigen::MatrixXd Y = to_eigen(Y_train);
    const Eigen::MatrixXd Xv = to_eigen(X_val);
    Eigen::MatrixXd Yv = to_eigen(Y_val);
    for (Eigen::Index k = 0; k < outputs; ++k) {
        Y.col(k).array() = (Y.col(k).array() - offset[static_cast<std::size_t>(k)]) / scale;
        Yv.col(k).array() = (Yv.col(k).array() - offset[static_cast<std::size_t>(k)]) / scale;
    }

    std::vector<int> widths;
    widths.push_back(static_cast<int>(X_train.cols));
    widths.insert(widths.end(), config.hidden.begin(), config.hidden.end());
    widths.push_back(static_cast<int>(outputs));
    MlpParams params = MlpParams::init(widths, config.activation, derive_seed(config.seed, 0));

    AdamState adam;
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
        adam.mw.push_back(Eigen::MatrixXd::Zero(params.weights[l].rows(), params.weights[l].cols()));
        adam.vw.push_back(adam.mw.back());
        adam.mb.push_back(Eigen::VectorXd::Zero(params.biases[l].size()));
        adam.vb.push_back(adam.mb.back());
    }

    std::mt19937_64 shuffle_rng(derive_seed(config.seed, 1));
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});

    MlpTrainResult result;
    MlpParams best = params;
    double best_val = std::numeric_limits<double>::infinity();
    int best_epoch = 0;
    const double unit = scale * scale;
    MlpGradients grads;
    const auto batch = static_cast<Eigen::Index>(config.batch_size);

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double train_sum = 0.0;
        for (Eigen::Index start = 0; start < n; start += batch) {
            const Eigen::Index len = std::min(batch, n - start);
            const std::vector<Eigen::Index> idx(order.begin() + start, order.begin() + start + len);
            const Eigen::MatrixXd Xb = X(idx, Eigen::all);
            const Eigen::MatrixXd Yb = Y(idx, Eigen::all);
            const double loss = mlp_gradient(params, Xb, Yb, grads);
            if (!std::isfinite(loss))
                fail(ErrorCode::Divergence, "training loss became non-finite at epoch " + std::to_string(epoch));
            train_sum += loss * static_cast<double>(len);

            if (config.optimizer == Optimizer::adam) {
                ++adam.step;
                const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(adam.step));
                const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(adam.step));
                const double lr = config.learning_rate * std::sqrt(c2) / c1;
                // Folding the bias corrections into the step keeps epsilon on the corrected scale.
                const double eps = config.epsilon * std::sqrt(c2);
                for (std::size_t l = 0; l < params.weights.size(); ++l) {
                    adam.mw[l] = config.beta1 * adam.mw[l] + (1.0 - config.beta1) * grads.weights[l];
                    adam.vw[l] = config.beta2 * adam.vw[l] + (1.0 - config.beta2) * grads.weights[l].cwiseAbs2();
                    params.weights[l].array() -= lr * adam.mw[l].array() / (adam.vw[l].array().sqrt() + eps);
                    adam.mb[l] = config.beta1 * adam.mb[l] + (1.0 - config.beta1) * grads.biases[l];
                    adam.vb[l] = config.beta2 * adam.vb[l] + (1.0 - config.beta2) * grads.biases[l].cwiseAbs2();
                    params.biases[l].array() -= lr * adam.mb[l].array() / (adam.vb[l].array().sqrt() + eps);
                }
            } else {
                for (std::size_t l = 0; l < params.weights.size(); ++l) {
                    params.weights[l] -= config.learning_rate * grads.weights[l];
                    params.biases[l] -= config.learning_rate * grads.biases[l];
                }
            }
        }
        const double val = mlp_loss(params, Xv, Yv);
        if (!std::isfinite(val) || !params.all_finite())
            fail(ErrorCode::Divergence, "validation loss became non-finite at epoch " + std::to_string(epoch));
        const double train_mse = train_sum / static_cast<double>(n) * unit;
        const double val_mse = val * unit;
        result.curve.push_back({epoch, train_mse, val_mse});
        if (val_mse < best_val) {
            best_val = val_mse;
            best_epoch = epoch;
            if (config.checkpointing)
                best = params;
        }
    }

    if (!config.checkpointing) {
        best = params;
        best_val = result.curve.back().val_mse;
        best_epoch = config.epochs;
    }
    result.model.params = std::move(best);
    result.model.target_offset = std::move(offset);
    result.model.target_scale = scale;
    result.best_epoch = best_epoch;
    result.best_val_mse = best_val;
    return result;
}

}  // namespace parkcast
