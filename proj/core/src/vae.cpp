#include "shm/vae.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "shm/error.hpp"
#include "shm/random.hpp"

namespace shm::vae {

std::string_view to_string(Mode m) { return m == Mode::Variational ? "variational" : "deterministic"; }

Mode mode_from_string(std::string_view name) {
    if (name == "variational") return Mode::Variational;
    if (name == "deterministic") return Mode::Deterministic;
    throw UsageError("unknown VAE mode '" + std::string(name) + "'");
}

void Architecture::validate() const {
    if (hidden_layers < 1 || hidden_layers > 3) throw UsageError("hidden layers must lie in [1, 3]");
    if (neurons < 1) throw UsageError("neurons per layer must be positive");
    if (latent_dim < 1) throw UsageError("latent dimension must be positive");
    if (activation == nn::Activation::Identity) throw UsageError("hidden activation must be non-linear");
}

void TrainConfig::validate() const {
    if (max_epochs < 1) throw UsageError("max_epochs must be positive");
    if (patience < 1 || patience >= max_epochs) throw UsageError("patience must lie in [1, max_epochs)");
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
        throw UsageError("validation fraction must lie in (0, 1)");
    }
    if (!(learning_rate > 0.0)) throw UsageError("learning rate must be positive");
    if (batch_size < 1) throw UsageError("batch size must be positive");
    if (!(beta >= 0.0 && std::isfinite(beta))) throw UsageError("beta must be finite and non-negative");
}

VaeModel make_model(int frame_length, const Architecture& arch, Mode mode, std::uint64_t seed) {
    arch.validate();
    if (frame_length < 1) throw UsageError("frame length must be positive");
    const int head = mode == Mode::Variational ? 2 * arch.latent_dim : arch.latent_dim;

    std::vector<int> enc_sizes{frame_length};
    std::vector<nn::Activation> enc_acts;
    for (int i = 0; i < arch.hidden_layers; ++i) {
        enc_sizes.push_back(arch.neurons);
        enc_acts.push_back(arch.activation);
    }
    enc_sizes.push_back(head);
    enc_acts.push_back(nn::Activation::Identity);

    std::vector<int> dec_sizes{arch.latent_dim};
    std::vector<nn::Activation> dec_acts;
    for (int i = 0; i < arch.hidden_layers; ++i) {
        dec_sizes.push_back(arch.neurons);
        dec_acts.push_back(arch.activation);
    }
    dec_sizes.push_back(frame_length);
    dec_acts.push_back(nn::Activation::Sigmoid);

    VaeModel model;
    model.encoder = nn::init_network(enc_sizes, enc_acts, mix_seed(seed, 2));
    model.decoder = nn::init_network(dec_sizes, dec_acts, mix_seed(seed, 3));
    model.latent_dim = arch.latent_dim;
    model.mode = mode;
    return model;
}

namespace {

Eigen::VectorXd to_vector(std::span<const double> frame) {
    return Eigen::Map<const Eigen::VectorXd>(frame.data(), static_cast<Eigen::Index>(frame.size()));
}

void check_frame(const VaeModel& model, Eigen::Index rows) {
    if (rows != model.encoder.input_size()) {
        throw UsageError("frame length " + std::to_string(rows) + " does not match model input " +
                         std::to_string(model.encoder.input_size()));
    }
}

}  // namespace

Posterior encode(const VaeModel& model, std::span<const double> frame) {
    check_frame(model, static_cast<Eigen::Index>(frame.size()));
    const Eigen::VectorXd out = model.encoder.predict(to_vector(frame));
    const Eigen::Index L = model.latent_dim;
    if (model.mode == Mode::Deterministic) {
        return {out, Eigen::VectorXd::Constant(L, kDeterministicLogVar)};
    }
    return {out.head(L), out.tail(L)};
}

Eigen::VectorXd reparameterize(const Eigen::VectorXd& mu, const Eigen::VectorXd& log_var, const Eigen::VectorXd& eps) {
    if (mu.size() != log_var.size() || mu.size() != eps.size()) throw UsageError("reparameterize: length mismatch");
    return mu.array() + (0.5 * log_var.array()).exp() * eps.array();
}

Eigen::VectorXd decode(const VaeModel& model, const Eigen::VectorXd& z) {
    if (z.size() != model.latent_dim) throw UsageError("decode: latent length mismatch");
    return model.decoder.predict(z);
}

double kl_to_standard_normal(const Eigen::VectorXd& mu, const Eigen::VectorXd& log_var) {
    if (mu.size() != log_var.size()) throw UsageError("kl_to_standard_normal: length mismatch");
    return 0.5 * (mu.array().square() + log_var.array().exp() - log_var.array() - 1.0).sum();
}

ElboTerms elbo_loss(std::span<const double> x, std::span<const double> x_hat, const Eigen::VectorXd& mu,
                    const Eigen::VectorXd& log_var, double beta) {
    if (x.size() != x_hat.size()) throw UsageError("elbo_loss: reconstruction length mismatch");
    ElboTerms t;
    for (std::size_t i = 0; i < x.size(); ++i) t.recon += (x[i] - x_hat[i]) * (x[i] - x_hat[i]);
    t.kl = kl_to_standard_normal(mu, log_var);
    t.total = t.recon + beta * t.kl;
    return t;
}

LossGradients loss_and_gradients(const VaeModel& model, const Eigen::MatrixXd& batch, const Eigen::MatrixXd& eps,
                                  double beta) {
    check_frame(model, batch.rows());
    const Eigen::Index L = model.latent_dim;
    const Eigen::Index B = batch.cols();
    if (B == 0) throw UsageError("loss_and_gradients: empty batch");
    const double inv_b = 1.0 / static_cast<double>(B);
    const bool variational = model.mode == Mode::Variational;
    if (variational && (eps.rows() != L || eps.cols() != B)) throw UsageError("loss_and_gradients: eps shape mismatch");

    const auto enc = model.encoder.forward(batch);
    const Eigen::MatrixXd& head = enc.output();

    Eigen::MatrixXd z;
    Eigen::MatrixXd sigma;
    if (variational) {
        sigma = (0.5 * head.bottomRows(L).array()).exp();
        z = head.topRows(L).array() + sigma.array() * eps.array();
    } else {
        z = head;
    }

    const auto dec = model.decoder.forward(z);
    const Eigen::MatrixXd diff = dec.output() - batch;

    LossGradients out;
    out.terms.recon = diff.squaredNorm() * inv_b;
    if (variational) {
        const auto mu = head.topRows(L).array();
        const auto lv = head.bottomRows(L).array();
        out.terms.kl = 0.5 * (mu.square() + lv.exp() - lv - 1.0).sum() * inv_b;
    }
    out.terms.total = out.terms.recon + beta * out.terms.kl;

    out.decoder = model.decoder.backward(dec, 2.0 * inv_b * diff);
    const Eigen::MatrixXd& dz = out.decoder.input;

    Eigen::MatrixXd d_head(head.rows(), B);
    if (variational) {
        const auto mu = head.topRows(L).array();
        const auto lv = head.bottomRows(L).array();
        d_head.topRows(L) = dz.array() + beta * inv_b * mu;
        d_head.bottomRows(L) = 0.5 * dz.array() * eps.array() * sigma.array() + 0.5 * beta * inv_b * (lv.exp() - 1.0);
    } else {
        d_head = dz;
    }
    out.encoder = model.encoder.backward(enc, d_head);
    return out;
}

double batch_loss(const VaeModel& model, const Eigen::MatrixXd& batch, const Eigen::MatrixXd& eps, double beta) {
    check_frame(model, batch.rows());
    const Eigen::Index L = model.latent_dim;
    const double inv_b = 1.0 / static_cast<double>(batch.cols());
    const Eigen::MatrixXd head = model.encoder.forward(batch).output();
    if (model.mode == Mode::Deterministic) {
        return (model.decoder.forward(head).output() - batch).squaredNorm() * inv_b;
    }
    const auto mu = head.topRows(L).array();
    const auto lv = head.bottomRows(L).array();
    const Eigen::MatrixXd z = mu + (0.5 * lv).exp() * eps.array();
    const double recon = (model.decoder.forward(z).output() - batch).squaredNorm() * inv_b;
    const double kl = 0.5 * (mu.square() + lv.exp() - lv - 1.0).sum() * inv_b;
    return recon + beta * kl;
}

Eigen::MatrixXd encode_means(const VaeModel& model, const Eigen::MatrixXd& batch) {
    check_frame(model, batch.rows());
    const Eigen::MatrixXd head = model.encoder.forward(batch).output();
    return model.mode == Mode::Variational ? Eigen::MatrixXd(head.topRows(model.latent_dim)) : head;
}

ElboTerms evaluate(const VaeModel& model, const Eigen::MatrixXd& batch, double beta) {
    check_frame(model, batch.rows());
    const double inv_b = 1.0 / static_cast<double>(batch.cols());
    const Eigen::MatrixXd head = model.encoder.forward(batch).output();
    const Eigen::Index L = model.latent_dim;
    ElboTerms t;
    const Eigen::MatrixXd mu = model.mode == Mode::Variational ? Eigen::MatrixXd(head.topRows(L)) : head;
    t.recon = (model.decoder.forward(mu).output() - batch).squaredNorm() * inv_b;
    if (model.mode == Mode::Variational) {
        const auto lv = head.bottomRows(L).array();
        t.kl = 0.5 * (mu.array().square() + lv.exp() - lv - 1.0).sum() * inv_b;
    }
    t.total = t.recon + beta * t.kl;
    return t;
}

Eigen::MatrixXd reconstruct_batch(const VaeModel& model, const Eigen::MatrixXd& batch) {
    return model.decoder.forward(encode_means(model, batch)).output();
}

Eigen::VectorXd reconstruct(const VaeModel& model, std::span<const double> frame) {
    check_frame(model, static_cast<Eigen::Index>(frame.size()));
    return reconstruct_batch(model, to_vector(frame)).col(0);
}

double reconstruction_mse(const VaeModel& model, const Eigen::MatrixXd& batch) {
    return (reconstruct_batch(model, batch) - batch).squaredNorm() / static_cast<double>(batch.size());
}

Eigen::MatrixXd frames_to_matrix(std::span<const Frame> frames) {
    if (frames.empty()) return {};
    const auto s = static_cast<Eigen::Index>(frames.front().values.size());
    Eigen::MatrixXd m(s, static_cast<Eigen::Index>(frames.size()));
    for (std::size_t j = 0; j < frames.size(); ++j) {
        if (static_cast<Eigen::Index>(frames[j].values.size()) != s) throw UsageError("frames differ in length");
        m.col(static_cast<Eigen::Index>(j)) = to_vector(frames[j].values);
    }
    return m;
}

bool EarlyStopping::observe(int epoch, double loss) {
    improved_ = loss < best_loss_;
    if (improved_) {
        best_loss_ = loss;
        best_epoch_ = epoch;
        since_best_ = 0;
        return false;
    }
    return ++since_best_ >= patience_;
}

TrainResult train(std::span<const Frame> frames, const Architecture& arch, Mode mode, const TrainConfig& config) {
    config.validate();
    arch.validate();
    if (frames.size() < 2) throw UsageError("train: need at least two frames");

    const auto split = holdout_indices(frames.size(), config.validation_fraction, mix_seed(config.seed, 0));
    if (split.train.empty()) throw UsageError("train: empty training set after validation holdout");
    const Eigen::MatrixXd all = frames_to_matrix(frames);
    Eigen::MatrixXd train_x(all.rows(), static_cast<Eigen::Index>(split.train.size()));
    Eigen::MatrixXd val_x(all.rows(), static_cast<Eigen::Index>(split.test.size()));
    for (std::size_t j = 0; j < split.train.size(); ++j) train_x.col(static_cast<Eigen::Index>(j)) = all.col(static_cast<Eigen::Index>(split.train[j]));
    for (std::size_t j = 0; j < split.test.size(); ++j) val_x.col(static_cast<Eigen::Index>(j)) = all.col(static_cast<Eigen::Index>(split.test[j]));

    TrainResult result;
    result.model = make_model(static_cast<int>(all.rows()), arch, mode, config.seed);
    VaeModel& model = result.model;
    nn::Optimizer enc_opt(config.optimizer, config.learning_rate);
    nn::Optimizer dec_opt(config.optimizer, config.learning_rate);
    Rng rng(mix_seed(config.seed, 1));

    EarlyStopping stopper(config.patience);
    VaeModel best = model;
    std::vector<Eigen::Index> order(static_cast<std::size_t>(train_x.cols()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    const Eigen::Index L = model.latent_dim;

    for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            const auto b = static_cast<Eigen::Index>(end - start);
            Eigen::MatrixXd batch(train_x.rows(), b);
            Eigen::MatrixXd eps(mode == Mode::Variational ? L : 0, b);
            for (Eigen::Index j = 0; j < b; ++j) {
                batch.col(j) = train_x.col(order[start + static_cast<std::size_t>(j)]);
                for (Eigen::Index r = 0; r < eps.rows(); ++r) eps(r, j) = rng.normal();
            }
            const auto lg = loss_and_gradients(model, batch, eps, config.beta);
            if (!std::isfinite(lg.terms.total)) {
                throw NumericalError("VAE training: non-finite loss at epoch " + std::to_string(epoch));
            }
            enc_opt.step(model.encoder, lg.encoder);
            dec_opt.step(model.decoder, lg.decoder);
            epoch_loss += lg.terms.total * static_cast<double>(b);
        }
        epoch_loss /= static_cast<double>(order.size());

        EpochRecord rec{epoch, epoch_loss, 0.0, 0.0};
        if (val_x.cols() > 0) {
            const auto val = evaluate(model, val_x, config.beta);
            rec.validation_loss = val.total;
            rec.validation_mse = val.recon / static_cast<double>(val_x.rows());
        } else {
            rec.validation_loss = epoch_loss;
        }
        if (!std::isfinite(rec.validation_loss)) {
            throw NumericalError("VAE training: non-finite validation loss at epoch " + std::to_string(epoch));
        }
        result.history.push_back(rec);
        const bool stop = stopper.observe(epoch, rec.validation_loss);
        if (stopper.improved()) best = model;
        if (stop) {
            result.stopped_early = true;
            break;
        }
    }

    best.normalization = model.normalization;
    result.model = std::move(best);
    result.best_epoch = stopper.best_epoch();
    result.best_validation_mse = result.history[static_cast<std::size_t>(result.best_epoch)].validation_mse;
    return result;
}

}  // namespace shm::vae
