#pragma once

#include "parkcast/util.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace parkcast {

enum class Activation { relu, tanh, sigmoid };

std::string_view to_string(Activation a) noexcept;
Activation parse_activation(std::string_view name);

/// Fully connected network; hidden layers use `hidden`, the output layer is linear.
struct MlpParams {
    std::vector<int> widths;  // input, hidden..., output
    std::vector<Eigen::MatrixXd> weights;  // [layer] (out x in)
    std::vector<Eigen::VectorXd> biases;
    Activation hidden = Activation::relu;

    /// He-style uniform initialisation, zero biases.
    static MlpParams init(std::vector<int> widths, Activation hidden, std::uint64_t seed);
    static MlpParams zeros(std::vector<int> widths, Activation hidden);

    std::size_t input_width() const { return static_cast<std::size_t>(widths.front()); }
    std::size_t output_width() const { return static_cast<std::size_t>(widths.back()); }
    std::size_t parameter_count() const;
    bool all_finite() const;
};

struct MlpGradients {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;
};

/// Samples are rows of X.
Eigen::MatrixXd mlp_forward_batch(const MlpParams& params, const Eigen::MatrixXd& X);
std::vector<double> mlp_forward(const MlpParams& params, std::span<const double> x);

/// Mean of squared errors over every sample and output.
double mlp_loss(const MlpParams& params, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y);

/// Backpropagated gradient of `mlp_loss`; returns the loss alongside.
double mlp_gradient(const MlpParams& params, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                    MlpGradients& grads);

/// Near-equal split of `total` neurons over `layers`, larger layers first: 90/4 -> 23,23,22,22.
std::vector<int> split_neurons(int total, int layers);

enum class Optimizer { adam, sgd };

struct MlpTrainConfig {
    std::vector<int> hidden = {23, 23, 22, 22};
    Activation activation = Activation::relu;
    double learning_rate = 1e-4;
    int epochs = 2000;
    int batch_size = 256;
    std::uint64_t seed = 1;
    bool checkpointing = true;
    Optimizer optimizer = Optimizer::adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    void validate() const;
};

void to_json(nlohmann::json& j, const MlpTrainConfig& c);
void from_json(const nlohmann::json& j, MlpTrainConfig& c);

/// Network plus the affine map from its standardized outputs to target units.
struct MlpModel {
    MlpParams params;
    std::vector<double> target_offset;  // per output
    double target_scale = 1.0;          // shared by all outputs

    std::vector<double> predict(std::span<const double> x) const;
    Matrix predict_batch(const Matrix& X) const;
};

struct EpochLoss {
    int epoch = 0;  // 1-based
    double train_mse = 0.0;
    double val_mse = 0.0;
};

struct MlpTrainResult {
    MlpModel model;
    std::vector<EpochLoss> curve;
    int best_epoch = 0;
    double best_val_mse = 0.0;
};

/// Mini-batch training with checkpointing on validation MSE (target units).
/// Throws Divergence when a loss turns non-finite.
MlpTrainResult mlp_train(const Matrix& X_train, const Matrix& Y_train, const Matrix& X_val, const Matrix& Y_val,
                         const MlpTrainConfig& config);

Eigen::MatrixXd to_eigen(const Matrix& m);

}  // namespace parkcast
