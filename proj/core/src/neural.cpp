#include "shm/neural.hpp"

#include <cmath>
#include <string>

#include "shm/error.hpp"
#include "shm/random.hpp"

namespace shm::nn {

std::string_view to_string(Activation a) {
    switch (a) {
        case Activation::ReLU: return "relu";
        case Activation::LeakyReLU: return "leaky_relu";
        case Activation::Sigmoid: return "sigmoid";
        case Activation::Identity: return "identity";
    }
    return "identity";
}

Activation activation_from_string(std::string_view name) {
    if (name == "relu") return Activation::ReLU;
    if (name == "leaky_relu" || name == "leakyrelu") return Activation::LeakyReLU;
    if (name == "sigmoid") return Activation::Sigmoid;
    if (name == "identity") return Activation::Identity;
    throw UsageError("unknown activation '" + std::string(name) + "'");
}

std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::Adam ? "adam" : "sgd"; }

OptimizerKind optimizer_from_string(std::string_view name) {
    if (name == "adam") return OptimizerKind::Adam;
    if (name == "sgd") return OptimizerKind::SGD;
    throw UsageError("unknown optimizer '" + std::string(name) + "'");
}

Eigen::MatrixXd activate(Activation a, const Eigen::MatrixXd& pre) {
    switch (a) {
        case Activation::ReLU: return pre.cwiseMax(0.0);
        case Activation::LeakyReLU:
            return pre.unaryExpr([](double v) { return v > 0.0 ? v : kLeakySlope * v; });
        case Activation::Sigmoid:
            // Split by sign so exp never overflows.
            return pre.unaryExpr([](double v) {
                if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
                const double e = std::exp(v);
                return e / (1.0 + e);
            });
        case Activation::Identity: return pre;
    }
    return pre;
}

Eigen::MatrixXd activation_derivative(Activation a, const Eigen::MatrixXd& out) {
    switch (a) {
        case Activation::ReLU: return out.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; });
        case Activation::LeakyReLU: return out.unaryExpr([](double v) { return v > 0.0 ? 1.0 : kLeakySlope; });
        case Activation::Sigmoid: return out.array() * (1.0 - out.array());
        case Activation::Identity: return Eigen::MatrixXd::Ones(out.rows(), out.cols());
    }
    return Eigen::MatrixXd::Ones(out.rows(), out.cols());
}

DenseNetwork::DenseNetwork(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        if (layers_[i].bias.size() != layers_[i].outputs()) throw UsageError("layer bias size mismatch");
        if (i > 0 && layers_[i].inputs() != layers_[i - 1].outputs()) {
            throw UsageError("layer " + std::to_string(i) + " input width does not match previous output");
        }
    }
}

Eigen::Index DenseNetwork::input_size() const { return layers_.empty() ? 0 : layers_.front().inputs(); }
Eigen::Index DenseNetwork::output_size() const { return layers_.empty() ? 0 : layers_.back().outputs(); }

ForwardCache DenseNetwork::forward(const Eigen::MatrixXd& input) const {
    if (layers_.empty()) throw UsageError("forward: empty network");
    if (input.rows() != input_size()) {
        throw UsageError("forward: input has " + std::to_string(input.rows()) + " rows, network expects " +
                         std::to_string(input_size()));
    }
    ForwardCache cache;
    cache.inputs.reserve(layers_.size());
    cache.activations.reserve(layers_.size());
    const Eigen::MatrixXd* x = &input;
    for (const auto& layer : layers_) {
        cache.inputs.push_back(*x);
        Eigen::MatrixXd pre = layer.weights * *x;
        pre.colwise() += layer.bias;
        cache.activations.push_back(activate(layer.activation, pre));
        x = &cache.activations.back();
    }
    return cache;
}

Eigen::VectorXd DenseNetwork::predict(const Eigen::VectorXd& x) const { return forward(x).output().col(0); }

Gradients DenseNetwork::backward(const ForwardCache& cache, const Eigen::MatrixXd& output_gradient) const {
    if (cache.inputs.size() != layers_.size() || cache.activations.size() != layers_.size()) {
        throw UsageError("backward: cache does not match network depth");
    }
    const Eigen::MatrixXd& out = cache.activations.back();
    if (output_gradient.rows() != out.rows() || output_gradient.cols() != out.cols()) {
        throw UsageError("backward: output gradient shape does not match cached output");
    }
    Gradients grads;
    grads.layers.resize(layers_.size());
    Eigen::MatrixXd delta = output_gradient;
    for (std::size_t i = layers_.size(); i-- > 0;) {
        const auto& layer = layers_[i];
        if (cache.inputs[i].rows() != layer.inputs()) throw UsageError("backward: stale cache");
        delta.array() *= activation_derivative(layer.activation, cache.activations[i]).array();
        grads.layers[i].weights = delta * cache.inputs[i].transpose();
        grads.layers[i].bias = delta.rowwise().sum();
        delta = layer.weights.transpose() * delta;
    }
    grads.input = std::move(delta);
    return grads;
}

std::size_t DenseNetwork::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
    return n;
}

Eigen::VectorXd DenseNetwork::flatten() const {
    Eigen::VectorXd flat(static_cast<Eigen::Index>(parameter_count()));
    Eigen::Index pos = 0;
    for (const auto& l : layers_) {
        flat.segment(pos, l.weights.size()) = l.weights.reshaped();
        pos += l.weights.size();
        flat.segment(pos, l.bias.size()) = l.bias;
        pos += l.bias.size();
    }
    return flat;
}

void DenseNetwork::assign(const Eigen::VectorXd& flat) {
    if (flat.size() != static_cast<Eigen::Index>(parameter_count())) throw UsageError("assign: size mismatch");
    Eigen::Index pos = 0;
    for (auto& l : layers_) {
        l.weights.reshaped() = flat.segment(pos, l.weights.size());
        pos += l.weights.size();
        l.bias = flat.segment(pos, l.bias.size());
        pos += l.bias.size();
    }
}

Eigen::VectorXd DenseNetwork::flatten(const Gradients& grads) {
    Eigen::Index total = 0;
    for (const auto& g : grads.layers) total += g.weights.size() + g.bias.size();
    Eigen::VectorXd flat(total);
    Eigen::Index pos = 0;
    for (const auto& g : grads.layers) {
        flat.segment(pos, g.weights.size()) = g.weights.reshaped();
        pos += g.weights.size();
        flat.segment(pos, g.bias.size()) = g.bias;
        pos += g.bias.size();
    }
    return flat;
}

bool DenseNetwork::all_finite() const {
    for (const auto& l : layers_) {
        if (!l.weights.allFinite() || !l.bias.allFinite()) return false;
    }
    return true;
}

DenseNetwork init_network(const std::vector<int>& layer_sizes, const std::vector<Activation>& activations,
                          std::uint64_t seed) {
    if (layer_sizes.size() < 2) throw UsageError("init_network: need at least input and output sizes");
    if (activations.size() != layer_sizes.size() - 1) throw UsageError("init_network: one activation per layer");
    for (int s : layer_sizes) {
        if (s < 1) throw UsageError("init_network: layer sizes must be >= 1");
    }
    Rng rng(seed);
    std::vector<DenseLayer> layers;
    for (std::size_t i = 0; i + 1 < layer_sizes.size(); ++i) {
        const int fan_in = layer_sizes[i];
        const int fan_out = layer_sizes[i + 1];
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        DenseLayer layer{Eigen::MatrixXd(fan_out, fan_in), Eigen::VectorXd::Zero(fan_out), activations[i]};
        for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
            for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) layer.weights(r, c) = rng.uniform(-limit, limit);
        }
        layers.push_back(std::move(layer));
    }
    return DenseNetwork(std::move(layers));
}

Optimizer::Optimizer(OptimizerKind kind, double learning_rate) : kind_(kind), learning_rate_(learning_rate) {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw UsageError("learning rate must be positive");
}

void Optimizer::step(DenseNetwork& net, const Gradients& grads) {
    auto& layers = net.layers();
    if (grads.layers.size() != layers.size()) throw UsageError("optimizer: gradient/parameter depth mismatch");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& g = grads.layers[i];
        if (g.weights.rows() != layers[i].weights.rows() || g.weights.cols() != layers[i].weights.cols() ||
            g.bias.size() != layers[i].bias.size()) {
            throw UsageError("optimizer: gradient shape mismatch at layer " + std::to_string(i));
        }
        if (!g.weights.allFinite() || !g.bias.allFinite()) {
            throw NumericalError("optimizer: non-finite gradient at layer " + std::to_string(i) + " (step " +
                                 std::to_string(t_ + 1) + ")");
        }
    }
    ++t_;
    if (kind_ == OptimizerKind::SGD) {
        for (std::size_t i = 0; i < layers.size(); ++i) {
            layers[i].weights -= learning_rate_ * grads.layers[i].weights;
            layers[i].bias -= learning_rate_ * grads.layers[i].bias;
        }
        return;
    }
    if (m_.empty()) {
        for (const auto& l : layers) {
            m_.push_back({Eigen::MatrixXd::Zero(l.weights.rows(), l.weights.cols()), Eigen::VectorXd::Zero(l.bias.size())});
        }
        v_ = m_;
    }
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
        m = beta1 * m + (1.0 - beta1) * g;
        v = beta2 * v + (1.0 - beta2) * g.cwiseAbs2();
        param.array() -= learning_rate_ * (m.array() / c1) / ((v.array() / c2).sqrt() + epsilon);
    };
    for (std::size_t i = 0; i < layers.size(); ++i) {
        update(layers[i].weights, m_[i].weights, v_[i].weights, grads.layers[i].weights);
        update(layers[i].bias, m_[i].bias, v_[i].bias, grads.layers[i].bias);
    }
}

}  // namespace shm::nn
