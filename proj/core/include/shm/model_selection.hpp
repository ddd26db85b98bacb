#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "shm/ocsvm.hpp"
#include "shm/random.hpp"
#include "shm/signals.hpp"
#include "shm/vae.hpp"

namespace shm::selection {

using Value = std::variant<long, double, std::string>;

/// Ordered name -> value assignment drawn from a SearchSpace.
class Configuration {
public:
    void set(std::string name, Value value);
    const Value& at(const std::string& name) const;
    bool contains(const std::string& name) const;
    long integer(const std::string& name) const;
    double real(const std::string& name) const;  // accepts integers too
    const std::string& text(const std::string& name) const;

    const std::vector<std::pair<std::string, Value>>& entries() const { return entries_; }
    nlohmann::json to_json() const;
    static Configuration from_json(const nlohmann::json& j);

    /// Same names with the same values; entry order is ignored (JSON objects do not keep it).
    bool operator==(const Configuration& other) const;

private:
    std::vector<std::pair<std::string, Value>> entries_;
};

struct Dimension {
    enum class Kind { Integer, Real, Categorical };

    std::string name;
    Kind kind = Kind::Real;
    double lo = 0.0;
    double hi = 1.0;
    std::vector<Value> choices;  // categorical only

    static Dimension integer(std::string name, long lo, long hi);
    static Dimension real(std::string name, double lo, double hi);
    static Dimension categorical(std::string name, std::vector<Value> choices);
};

class SearchSpace {
public:
    explicit SearchSpace(std::vector<Dimension> dims) : dims_(std::move(dims)) {}

    const std::vector<Dimension>& dimensions() const { return dims_; }
    std::size_t size() const { return dims_.size(); }

    /// Maps a point of the unit cube onto a configuration.
    Configuration decode(std::span<const double> unit) const;
    /// Inverse used by the surrogate (cell centres for discrete dimensions).
    std::vector<double> encode(const Configuration& config) const;
    Configuration sample(Rng& rng) const;
    bool contains(const Configuration& config) const;

    /// Hidden layers [1,3], neurons [4,128], activation, latent [2,40], optimizer, learning rate.
    static SearchSpace vae();
    /// nu [1e-3, 1], kernel, polynomial order [2,4].
    static SearchSpace ocsvm();

private:
    std::vector<Dimension> dims_;
};

struct VaeHyperparameters {
    vae::Architecture architecture;
    nn::OptimizerKind optimizer = nn::OptimizerKind::Adam;
    double learning_rate = 1e-3;

    static VaeHyperparameters from(const Configuration& config);
    Configuration to_configuration() const;
};

struct OcSvmHyperparameters {
    double nu = ocsvm::kMinNu;
    ocsvm::KernelKind kernel = ocsvm::KernelKind::RBF;
    int order = 3;

    static OcSvmHyperparameters from(const Configuration& config);
    Configuration to_configuration() const;
    /// Concrete kernel for a training set (RBF gamma and polynomial scale from the data).
    ocsvm::KernelSpec kernel_for(std::span<const ocsvm::Point> points) const;
};

struct TrialOutcome {
    double objective = 0.0;
    std::vector<double> fold_values;
};

/// Mean over k folds of the validation reconstruction MSE (lower is better).
/// `base` supplies epochs/patience/batch; each fold's inner split reuses the fold seed.
TrialOutcome cv_objective_vae(const VaeHyperparameters& hp, std::span<const Frame> frames, int k, std::uint64_t seed,
                              const vae::TrainConfig& base = {}, vae::Mode mode = vae::Mode::Variational);

/// Mean over k folds of the validation inlier fraction (higher is better).
TrialOutcome cv_objective_ocsvm(const OcSvmHyperparameters& hp, std::span<const ocsvm::Point> features, int k,
                                std::uint64_t seed);

enum class Strategy { Random, Surrogate };
enum class Direction { Minimize, Maximize };

std::string_view to_string(Strategy s);
Strategy strategy_from_string(std::string_view name);

struct TrialRecord {
    int trial = 0;
    Configuration config;
    double objective = 0.0;  // +inf (minimize) / -inf (maximize) when failed
    std::vector<double> fold_values;
    double wall_time_s = 0.0;
    std::uint64_t seed = 0;
    bool failed = false;
    std::string error;

    nlohmann::json to_json() const;
};

struct SearchOptions {
    int trials = 10;
    Strategy strategy = Strategy::Random;
    Direction direction = Direction::Minimize;
    std::uint64_t seed = 0;
    int warm_start = 10;       // random trials before the surrogate proposes
    int candidates = 1000;     // random candidates scored by expected improvement
};

struct SearchResult {
    TrialRecord best;
    std::vector<TrialRecord> history;
    std::vector<double> running_best;
};

using Objective = std::function<TrialOutcome(const Configuration&, std::uint64_t seed)>;
using TrialCallback = std::function<void(const TrialRecord&)>;

/// Runs `trials` evaluations; objective exceptions derived from shm::Error mark
/// the trial failed. Throws NumericalError when every trial fails.
SearchResult search(const SearchSpace& space, const Objective& objective, const SearchOptions& options,
                    const TrialCallback& on_trial = {});

/// Expected improvement (minimization) of a Gaussian prediction over `best`.
double expected_improvement(double mean, double stddev, double best);

/// Isotropic squared-exponential Gaussian process used by the surrogate strategy.
class GaussianProcess {
public:
    /// Picks the length scale by marginal likelihood over a small grid.
    void fit(const std::vector<std::vector<double>>& x, const std::vector<double>& y);
    std::pair<double, double> predict(std::span<const double> x) const;  // mean, stddev
    double length_scale() const { return length_scale_; }

private:
    std::vector<std::vector<double>> x_;
    Eigen::LLT<Eigen::MatrixXd> chol_;
    Eigen::VectorXd alpha_;
    double y_mean_ = 0.0;
    double y_scale_ = 1.0;
    double length_scale_ = 0.3;
    double noise_ = 1e-6;
};

/// One JSON object per line.
void write_history(std::ostream& out, std::span<const TrialRecord> history);

}  // namespace shm::selection
