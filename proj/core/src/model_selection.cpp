#include "shm/model_selection.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <limits>
#include <numbers>
#include <ostream>

#include "shm/error.hpp"

namespace shm::selection {

void Configuration::set(std::string name, Value value) {
    for (auto& [n, v] : entries_) {
        if (n == name) {
            v = std::move(value);
            return;
        }
    }
    entries_.emplace_back(std::move(name), std::move(value));
}

const Value& Configuration::at(const std::string& name) const {
    for (const auto& [n, v] : entries_) {
        if (n == name) return v;
    }
    throw UsageError("configuration has no entry '" + name + "'");
}

bool Configuration::contains(const std::string& name) const {
    return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == name; });
}

long Configuration::integer(const std::string& name) const {
    const auto& v = at(name);
    if (const auto* i = std::get_if<long>(&v)) return *i;
    throw UsageError("configuration entry '" + name + "' is not an integer");
}

double Configuration::real(const std::string& name) const {
    const auto& v = at(name);
    if (const auto* d = std::get_if<double>(&v)) return *d;
    if (const auto* i = std::get_if<long>(&v)) return static_cast<double>(*i);
    throw UsageError("configuration entry '" + name + "' is not numeric");
}

const std::string& Configuration::text(const std::string& name) const {
    const auto& v = at(name);
    if (const auto* s = std::get_if<std::string>(&v)) return *s;
    throw UsageError("configuration entry '" + name + "' is not text");
}

nlohmann::json Configuration::to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [n, v] : entries_) std::visit([&](const auto& x) { j[n] = x; }, v);
    return j;
}

bool Configuration::operator==(const Configuration& other) const {
    if (entries_.size() != other.entries_.size()) return false;
    for (const auto& [name, value] : entries_) {
        if (!other.contains(name) || other.at(name) != value) return false;
    }
    return true;
}

Configuration Configuration::from_json(const nlohmann::json& j) {
    Configuration c;
    for (const auto& [name, value] : j.items()) {
        if (value.is_number_integer()) c.set(name, value.get<long>());
        else if (value.is_number()) c.set(name, value.get<double>());
        else if (value.is_string()) c.set(name, value.get<std::string>());
        else throw DataError("configuration entry '" + name + "' has an unsupported type");
    }
    return c;
}

Dimension Dimension::integer(std::string name, long lo, long hi) {
    return {std::move(name), Kind::Integer, static_cast<double>(lo), static_cast<double>(hi), {}};
}

Dimension Dimension::real(std::string name, double lo, double hi) { return {std::move(name), Kind::Real, lo, hi, {}}; }

Dimension Dimension::categorical(std::string name, std::vector<Value> choices) {
    return {std::move(name), Kind::Categorical, 0.0, static_cast<double>(choices.size() - 1), std::move(choices)};
}

Configuration SearchSpace::decode(std::span<const double> unit) const {
    if (unit.size() != dims_.size()) throw UsageError("SearchSpace::decode: dimension mismatch");
    Configuration c;
    for (std::size_t i = 0; i < dims_.size(); ++i) {
        const auto& d = dims_[i];
        const double u = std::clamp(unit[i], 0.0, 1.0);
        switch (d.kind) {
            case Dimension::Kind::Integer: {
                const long span = static_cast<long>(d.hi - d.lo) + 1;
                const long offset = std::min(span - 1, static_cast<long>(std::floor(u * static_cast<double>(span))));
                c.set(d.name, static_cast<long>(d.lo) + offset);
                break;
            }
            case Dimension::Kind::Real: c.set(d.name, d.lo + u * (d.hi - d.lo)); break;
            case Dimension::Kind::Categorical: {
                const auto n = static_cast<long>(d.choices.size());
                const long idx = std::min(n - 1, static_cast<long>(std::floor(u * static_cast<double>(n))));
                c.set(d.name, d.choices[static_cast<std::size_t>(idx)]);
                break;
            }
        }
    }
    return c;
}

std::vector<double> SearchSpace::encode(const Configuration& config) const {
    std::vector<double> unit;
    for (const auto& d : dims_) {
        switch (d.kind) {
            case Dimension::Kind::Integer: {
                const double span = d.hi - d.lo + 1.0;
                unit.push_back((static_cast<double>(config.integer(d.name)) - d.lo + 0.5) / span);
                break;
            }
            case Dimension::Kind::Real: unit.push_back((config.real(d.name) - d.lo) / (d.hi - d.lo)); break;
            case Dimension::Kind::Categorical: {
                const auto& v = config.at(d.name);
                const auto it = std::find(d.choices.begin(), d.choices.end(), v);
                if (it == d.choices.end()) throw UsageError("value of '" + d.name + "' is not a valid choice");
                unit.push_back((static_cast<double>(it - d.choices.begin()) + 0.5) / static_cast<double>(d.choices.size()));
                break;
            }
        }
    }
    return unit;
}

Configuration SearchSpace::sample(Rng& rng) const {
    std::vector<double> u(dims_.size());
    for (double& x : u) x = rng.uniform();
    return decode(u);
}

bool SearchSpace::contains(const Configuration& config) const {
    for (const auto& d : dims_) {
        if (!config.contains(d.name)) return false;
        const auto& v = config.at(d.name);
        switch (d.kind) {
            case Dimension::Kind::Integer: {
                const auto* i = std::get_if<long>(&v);
                if (i == nullptr || *i < static_cast<long>(d.lo) || *i > static_cast<long>(d.hi)) return false;
                break;
            }
            case Dimension::Kind::Real: {
                const double x = config.real(d.name);
                if (!(x >= d.lo && x <= d.hi)) return false;
                break;
            }
            case Dimension::Kind::Categorical:
                if (std::find(d.choices.begin(), d.choices.end(), v) == d.choices.end()) return false;
                break;
        }
    }
    return true;
}

SearchSpace SearchSpace::vae() {
    return SearchSpace({
        Dimension::integer("hidden_layers", 1, 3),
        Dimension::integer("neurons", 4, 128),
        Dimension::categorical("activation", {std::string("relu"), std::string("leaky_relu"), std::string("sigmoid")}),
        Dimension::integer("latent_dim", 2, 40),
        Dimension::categorical("optimizer", {std::string("adam"), std::string("sgd")}),
        Dimension::categorical("learning_rate", {1e-4, 1e-3, 1e-2}),
    });
}

SearchSpace SearchSpace::ocsvm() {
    return SearchSpace({
        Dimension::real("nu", ocsvm::kMinNu, 1.0),
        Dimension::categorical("kernel", {std::string("rbf"), std::string("polynomial"), std::string("linear")}),
        Dimension::integer("order", 2, 4),
    });
}

VaeHyperparameters VaeHyperparameters::from(const Configuration& config) {
    VaeHyperparameters hp;
    hp.architecture.hidden_layers = static_cast<int>(config.integer("hidden_layers"));
    hp.architecture.neurons = static_cast<int>(config.integer("neurons"));
    hp.architecture.activation = nn::activation_from_string(config.text("activation"));
    hp.architecture.latent_dim = static_cast<int>(config.integer("latent_dim"));
    hp.optimizer = nn::optimizer_from_string(config.text("optimizer"));
    hp.learning_rate = config.real("learning_rate");
    return hp;
}

Configuration VaeHyperparameters::to_configuration() const {
    Configuration c;
    c.set("hidden_layers", static_cast<long>(architecture.hidden_layers));
    c.set("neurons", static_cast<long>(architecture.neurons));
    c.set("activation", std::string(nn::to_string(architecture.activation)));
    c.set("latent_dim", static_cast<long>(architecture.latent_dim));
    c.set("optimizer", std::string(nn::to_string(optimizer)));
    c.set("learning_rate", learning_rate);
    return c;
}

OcSvmHyperparameters OcSvmHyperparameters::from(const Configuration& config) {
    OcSvmHyperparameters hp;
    hp.nu = config.real("nu");
    hp.kernel = ocsvm::kernel_from_string(config.text("kernel"));
    hp.order = config.contains("order") ? static_cast<int>(config.integer("order")) : 3;
    return hp;
}

Configuration OcSvmHyperparameters::to_configuration() const {
    Configuration c;
    c.set("nu", nu);
    c.set("kernel", std::string(ocsvm::to_string(kernel)));
    c.set("order", static_cast<long>(order));
    return c;
}

ocsvm::KernelSpec OcSvmHyperparameters::kernel_for(std::span<const ocsvm::Point> points) const {
    switch (kernel) {
        case ocsvm::KernelKind::RBF: return ocsvm::KernelSpec::rbf(ocsvm::default_gamma(points));
        case ocsvm::KernelKind::Polynomial: {
            const double d = points.empty() ? 1.0 : static_cast<double>(points.front().size());
            return ocsvm::KernelSpec::polynomial(order, 1.0 / d, 1.0);
        }
        case ocsvm::KernelKind::Linear: return ocsvm::KernelSpec::linear();
    }
    return ocsvm::KernelSpec::linear();
}

TrialOutcome cv_objective_vae(const VaeHyperparameters& hp, std::span<const Frame> frames, int k, std::uint64_t seed,
                              const vae::TrainConfig& base, vae::Mode mode) {
    const auto folds = kfold_indices(frames.size(), k, seed);
    TrialOutcome out;
    for (std::size_t f = 0; f < folds.size(); ++f) {
        vae::TrainConfig cfg = base;
        cfg.optimizer = hp.optimizer;
        cfg.learning_rate = hp.learning_rate;
        cfg.seed = mix_seed(seed, f);
        const auto train_frames = select<Frame>(frames, folds[f].train);
        const auto val_frames = select<Frame>(frames, folds[f].test);
        const auto trained = vae::train(train_frames, hp.architecture, mode, cfg);
        out.fold_values.push_back(vae::reconstruction_mse(trained.model, vae::frames_to_matrix(val_frames)));
    }
    double sum = 0.0;
    for (double v : out.fold_values) sum += v;
    out.objective = sum / static_cast<double>(out.fold_values.size());
    return out;
}

TrialOutcome cv_objective_ocsvm(const OcSvmHyperparameters& hp, std::span<const ocsvm::Point> features, int k,
                                std::uint64_t seed) {
    const auto folds = kfold_indices(features.size(), k, seed);
    TrialOutcome out;
    for (const auto& fold : folds) {
        const auto train = select<ocsvm::Point>(features, fold.train);
        const auto model = ocsvm::fit(train, hp.nu, hp.kernel_for(train));
        std::size_t inliers = 0;
        for (std::size_t i : fold.test) {
            if (ocsvm::classify(model, features[i]) == ocsvm::Label::Inlier) ++inliers;
        }
        out.fold_values.push_back(static_cast<double>(inliers) / static_cast<double>(fold.test.size()));
    }
    double sum = 0.0;
    for (double v : out.fold_values) sum += v;
    out.objective = sum / static_cast<double>(out.fold_values.size());
    return out;
}

std::string_view to_string(Strategy s) { return s == Strategy::Random ? "random" : "surrogate"; }

Strategy strategy_from_string(std::string_view name) {
    if (name == "random") return Strategy::Random;
    if (name == "surrogate") return Strategy::Surrogate;
    throw UsageError("unknown search strategy '" + std::string(name) + "'");
}

nlohmann::json TrialRecord::to_json() const {
    nlohmann::json j;
    j["trial"] = trial;
    j["config"] = config.to_json();
    j["objective"] = failed ? nlohmann::json(nullptr) : nlohmann::json(objective);
    j["fold_values"] = fold_values;
    j["wall_time_s"] = wall_time_s;
    j["seed"] = seed;
    j["failed"] = failed;
    if (failed) j["error"] = error;
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    j["timestamp"] = stamp;
    return j;
}

double expected_improvement(double mean, double stddev, double best) {
    if (!(stddev > 0.0)) return std::max(0.0, best - mean);
    const double z = (best - mean) / stddev;
    const double cdf = 0.5 * std::erfc(-z / std::numbers::sqrt2);
    const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
    return (best - mean) * cdf + stddev * pdf;
}

namespace {

double sq_distance(std::span<const double> a, std::span<const double> b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
    return d;
}

}  // namespace

void GaussianProcess::fit(const std::vector<std::vector<double>>& x, const std::vector<double>& y) {
    if (x.empty() || x.size() != y.size()) throw UsageError("GaussianProcess::fit: bad training data");
    x_ = x;
    const auto n = static_cast<Eigen::Index>(y.size());
    Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(y.data(), n);
    y_mean_ = yv.mean();
    const double var = (yv.array() - y_mean_).square().mean();
    y_scale_ = var > 0.0 ? std::sqrt(var) : 1.0;
    yv = (yv.array() - y_mean_) / y_scale_;

    double best_lml = -std::numeric_limits<double>::infinity();
    for (double ell : {0.1, 0.2, 0.3, 0.5, 1.0}) {
        Eigen::MatrixXd k(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j <= i; ++j) {
                k(i, j) = k(j, i) = std::exp(-0.5 * sq_distance(x[static_cast<std::size_t>(i)], x[static_cast<std::size_t>(j)]) / (ell * ell));
            }
        }
        k.diagonal().array() += noise_ + 1e-8;
        Eigen::LLT<Eigen::MatrixXd> llt(k);
        if (llt.info() != Eigen::Success) continue;
        const Eigen::VectorXd a = llt.solve(yv);
        const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
        const double lml = -0.5 * yv.dot(a) - 0.5 * log_det;
        if (lml > best_lml) {
            best_lml = lml;
            length_scale_ = ell;
            chol_ = llt;
            alpha_ = a;
        }
    }
    if (!std::isfinite(best_lml)) throw NumericalError("GaussianProcess::fit: covariance not positive definite");
}

std::pair<double, double> GaussianProcess::predict(std::span<const double> x) const {
    const auto n = static_cast<Eigen::Index>(x_.size());
    Eigen::VectorXd ks(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        ks(i) = std::exp(-0.5 * sq_distance(x, x_[static_cast<std::size_t>(i)]) / (length_scale_ * length_scale_));
    }
    const double mean = ks.dot(alpha_);
    const Eigen::VectorXd v = chol_.matrixL().solve(ks);
    const double var = std::max(0.0, 1.0 + noise_ - v.squaredNorm());
    return {y_mean_ + y_scale_ * mean, y_scale_ * std::sqrt(var)};
}

SearchResult search(const SearchSpace& space, const Objective& objective, const SearchOptions& options,
                    const TrialCallback& on_trial) {
    if (options.trials < 1) throw UsageError("search: trials must be at least 1");
    const bool minimize = options.direction == Direction::Minimize;
    const double worst = minimize ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    auto better = [&](double a, double b) { return minimize ? a < b : a > b; };

    Rng rng(options.seed);
    SearchResult result;
    bool have_best = false;
    for (int t = 0; t < options.trials; ++t) {
        Configuration config;
        const bool propose = options.strategy == Strategy::Surrogate && t >= options.warm_start;
        std::vector<std::vector<double>> xs;
        std::vector<double> ys;
        if (propose) {
            for (const auto& rec : result.history) {
                if (rec.failed) continue;
                xs.push_back(space.encode(rec.config));
                ys.push_back(minimize ? rec.objective : -rec.objective);
            }
        }
        if (propose && xs.size() >= 2) {
            GaussianProcess gp;
            gp.fit(xs, ys);
            const double best_y = *std::min_element(ys.begin(), ys.end());
            double best_ei = -1.0;
            for (int c = 0; c < options.candidates; ++c) {
                const Configuration cand = space.sample(rng);
                const auto enc = space.encode(cand);
                const auto [mu, sd] = gp.predict(enc);
                const double ei = expected_improvement(mu, sd, best_y);
                if (ei > best_ei) {
                    best_ei = ei;
                    config = cand;
                }
            }
        } else {
            config = space.sample(rng);
        }

        TrialRecord rec;
        rec.trial = t;
        rec.config = config;
        rec.seed = options.seed;
        const auto start = std::chrono::steady_clock::now();
        try {
            auto outcome = objective(config, options.seed);
            rec.objective = outcome.objective;
            rec.fold_values = std::move(outcome.fold_values);
            if (!std::isfinite(rec.objective)) {
                rec.failed = true;
                rec.error = "non-finite objective";
            }
        } catch (const Error& e) {
            rec.failed = true;
            rec.error = e.what();
        }
        if (rec.failed) rec.objective = worst;
        rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

        if (!rec.failed && (!have_best || better(rec.objective, result.best.objective))) {
            result.best = rec;
            have_best = true;
        }
        result.running_best.push_back(have_best ? result.best.objective : worst);
        result.history.push_back(rec);
        if (on_trial) on_trial(rec);
    }
    if (!have_best) throw NumericalError("search: all " + std::to_string(options.trials) + " trials failed");
    return result;
}

void write_history(std::ostream& out, std::span<const TrialRecord> history) {
    for (const auto& rec : history) out << rec.to_json().dump() << '\n';
}

}  // namespace shm::selection
