#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace shm::nn {

enum class Activation { ReLU, LeakyReLU, Sigmoid, Identity };

inline constexpr double kLeakySlope = 0.01;

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view name);

struct DenseLayer {
    Eigen::MatrixXd weights;  // out x in
    Eigen::VectorXd bias;     // out
    Activation activation = Activation::Identity;

    Eigen::Index inputs() const { return weights.cols(); }
    Eigen::Index outputs() const { return weights.rows(); }
};

/// Values cached by a forward pass; columns of every matrix are batch items.
struct ForwardCache {
    std::vector<Eigen::MatrixXd> inputs;       // input to each layer
    std::vector<Eigen::MatrixXd> activations;  // output of each layer

    const Eigen::MatrixXd& output() const { return activations.back(); }
};

struct LayerGradient {
    Eigen::MatrixXd weights;
    Eigen::VectorXd bias;
};

struct Gradients {
    std::vector<LayerGradient> layers;
    Eigen::MatrixXd input;  // d loss / d network input
};

class DenseNetwork {
public:
    DenseNetwork() = default;
    explicit DenseNetwork(std::vector<DenseLayer> layers);

    Eigen::Index input_size() const;
    Eigen::Index output_size() const;
    const std::vector<DenseLayer>& layers() const { return layers_; }
    std::vector<DenseLayer>& layers() { return layers_; }
    bool empty() const { return layers_.empty(); }

    /// Batch forward pass; `input` is features x batch.
    ForwardCache forward(const Eigen::MatrixXd& input) const;
    Eigen::VectorXd predict(const Eigen::VectorXd& x) const;

    /// Reverse-mode gradients of a scalar loss given d loss / d output.
    Gradients backward(const ForwardCache& cache, const Eigen::MatrixXd& output_gradient) const;

    std::size_t parameter_count() const;
    /// Flattened parameters, layer by layer: weights column-major then bias.
    Eigen::VectorXd flatten() const;
    void assign(const Eigen::VectorXd& flat);
    static Eigen::VectorXd flatten(const Gradients& grads);

    bool all_finite() const;

private:
    std::vector<DenseLayer> layers_;
};

/// Glorot-uniform weights, zero biases. activations.size() == layer_sizes.size() - 1.
DenseNetwork init_network(const std::vector<int>& layer_sizes, const std::vector<Activation>& activations,
                          std::uint64_t seed);

Eigen::MatrixXd activate(Activation a, const Eigen::MatrixXd& pre);
/// Derivative expressed through the activation output (all four admit this form).
Eigen::MatrixXd activation_derivative(Activation a, const Eigen::MatrixXd& out);

enum class OptimizerKind { Adam, SGD };

std::string_view to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(std::string_view name);

class Optimizer {
public:
    Optimizer(OptimizerKind kind, double learning_rate);

    OptimizerKind kind() const { return kind_; }
    double learning_rate() const { return learning_rate_; }
    long step_count() const { return t_; }

    /// Applies one update. Throws NumericalError on a non-finite gradient,
    /// leaving the network untouched.
    void step(DenseNetwork& net, const Gradients& grads);

    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

private:
    OptimizerKind kind_;
    double learning_rate_;
    long t_ = 0;
    std::vector<LayerGradient> m_;
    std::vector<LayerGradient> v_;
};

}  // namespace shm::nn
