#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "shm/neural.hpp"
#include "shm/signals.hpp"

namespace shm::vae {

/// Variational: encoder emits (mu, log sigma^2) and z is sampled.
/// Deterministic: plain autoencoder, z = encoder output, no KL term.
enum class Mode { Variational, Deterministic };

std::string_view to_string(Mode m);
Mode mode_from_string(std::string_view name);

/// Hidden stack shared (mirrored) by encoder and decoder.
struct Architecture {
    int hidden_layers = 1;
    int neurons = 60;
    nn::Activation activation = nn::Activation::Sigmoid;
    int latent_dim = 20;

    void validate() const;
};

struct TrainConfig {
    int max_epochs = 1000;
    int patience = 50;
    double validation_fraction = 0.2;
    double learning_rate = 1e-3;
    nn::OptimizerKind optimizer = nn::OptimizerKind::Adam;
    std::uint64_t seed = 0;
    int batch_size = 32;
    double beta = 1.0;

    void validate() const;
};

struct VaeModel {
    nn::DenseNetwork encoder;  // s -> 2L (variational) or L (deterministic)
    nn::DenseNetwork decoder;  // L -> s, sigmoid output
    int latent_dim = 0;
    Mode mode = Mode::Variational;
    NormalizationStats normalization;

    int frame_length() const { return static_cast<int>(encoder.input_size()); }
};

VaeModel make_model(int frame_length, const Architecture& arch, Mode mode, std::uint64_t seed);

struct Posterior {
    Eigen::VectorXd mu;
    Eigen::VectorXd log_var;  // -infinity in deterministic mode
};

inline constexpr double kDeterministicLogVar = -std::numeric_limits<double>::infinity();

Posterior encode(const VaeModel& model, std::span<const double> frame);
Eigen::VectorXd reparameterize(const Eigen::VectorXd& mu, const Eigen::VectorXd& log_var, const Eigen::VectorXd& eps);
Eigen::VectorXd decode(const VaeModel& model, const Eigen::VectorXd& z);

/// KL(N(mu, diag sigma^2) || N(0, I)).
double kl_to_standard_normal(const Eigen::VectorXd& mu, const Eigen::VectorXd& log_var);

struct ElboTerms {
    double total = 0.0;
    double recon = 0.0;  // sum of squared errors over the frame
    double kl = 0.0;
};

/// Negative ELBO of one frame: recon + beta * KL.
ElboTerms elbo_loss(std::span<const double> x, std::span<const double> x_hat, const Eigen::VectorXd& mu,
                    const Eigen::VectorXd& log_var, double beta = 1.0);

struct LossGradients {
    ElboTerms terms;  // averaged over the batch
    nn::Gradients encoder;
    nn::Gradients decoder;
};

/// Batch-mean negative ELBO and its exact gradient for fixed noise `eps`
/// (L x batch; ignored in deterministic mode). `batch` is s x batch.
LossGradients loss_and_gradients(const VaeModel& model, const Eigen::MatrixXd& batch, const Eigen::MatrixXd& eps,
                                 double beta);
double batch_loss(const VaeModel& model, const Eigen::MatrixXd& batch, const Eigen::MatrixXd& eps, double beta);

/// Inference-path loss (z = mu), averaged per frame.
ElboTerms evaluate(const VaeModel& model, const Eigen::MatrixXd& batch, double beta);

/// Inference reconstruction with z = mu.
Eigen::VectorXd reconstruct(const VaeModel& model, std::span<const double> frame);
Eigen::MatrixXd reconstruct_batch(const VaeModel& model, const Eigen::MatrixXd& batch);
/// Encoder means for a batch (L x batch).
Eigen::MatrixXd encode_means(const VaeModel& model, const Eigen::MatrixXd& batch);

/// Mean squared reconstruction error per frame (mean over samples and frames).
double reconstruction_mse(const VaeModel& model, const Eigen::MatrixXd& batch);

Eigen::MatrixXd frames_to_matrix(std::span<const Frame> frames);

/// Tracks the best validation loss; signals a stop after `patience` epochs
/// without strict improvement.
class EarlyStopping {
public:
    explicit EarlyStopping(int patience) : patience_(patience) {}

    /// Returns true when training should stop.
    bool observe(int epoch, double loss);
    bool improved() const { return improved_; }
    int best_epoch() const { return best_epoch_; }
    double best_loss() const { return best_loss_; }

private:
    int patience_;
    int best_epoch_ = -1;
    double best_loss_ = std::numeric_limits<double>::infinity();
    int since_best_ = 0;
    bool improved_ = false;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double validation_loss = 0.0;
    double validation_mse = 0.0;
};

struct TrainResult {
    VaeModel model;  // parameters of the best validation epoch
    std::vector<EpochRecord> history;
    int best_epoch = 0;
    bool stopped_early = false;
    double best_validation_mse = 0.0;
};

/// Trains on normalized undamaged frames. A validation_fraction holdout drives
/// early stopping; one fresh eps draw per frame per epoch.
TrainResult train(std::span<const Frame> frames, const Architecture& arch, Mode mode, const TrainConfig& config);

}  // namespace shm::vae
