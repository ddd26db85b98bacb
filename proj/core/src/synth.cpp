#include "shm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>
#include <string>

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/FFT>

#include "shm/error.hpp"
#include "shm/random.hpp"

namespace shm::synth {

void StructuralModel::validate() const {
    if (story_masses.empty()) throw UsageError("structural model needs at least one story");
    if (story_masses.size() != story_stiffnesses.size()) {
        throw UsageError("story mass and stiffness lists differ in length");
    }
    for (std::size_t i = 0; i < story_masses.size(); ++i) {
        if (!(story_masses[i] > 0.0) || !(story_stiffnesses[i] > 0.0)) {
            throw UsageError("story " + std::to_string(i + 1) + ": mass and stiffness must be positive");
        }
    }
    if (!(damping_ratio >= 0.0 && damping_ratio <= 0.2)) throw UsageError("damping ratio must lie in [0, 0.2]");
}

bool DamageScenario::undamaged() const {
    return std::all_of(stiffness_multipliers.begin(), stiffness_multipliers.end(),
                       [](double m) { return m == 1.0; });
}

void DamageScenario::validate(std::size_t story_count) const {
    if (stiffness_multipliers.size() != story_count) {
        throw UsageError("scenario " + std::to_string(scenario_id) + ": expected " +
                         std::to_string(story_count) + " stiffness multipliers");
    }
    for (double m : stiffness_multipliers) {
        if (!(m > 0.0 && m <= 1.0)) {
            throw UsageError("scenario " + std::to_string(scenario_id) + ": multipliers must lie in (0, 1]");
        }
    }
}

double DamageScenario::severity() const {
    if (stiffness_multipliers.empty()) return 0.0;
    const double sum = std::accumulate(stiffness_multipliers.begin(), stiffness_multipliers.end(), 0.0);
    return 1.0 - sum / static_cast<double>(stiffness_multipliers.size());
}

std::size_t ExcitationSpec::sample_count() const {
    return static_cast<std::size_t>(std::llround(duration_s * sampling_rate_hz));
}

void ExcitationSpec::validate() const {
    if (!(duration_s > 0.0) || !(sampling_rate_hz > 0.0)) {
        throw UsageError("excitation duration and sampling rate must be positive");
    }
    if (!(band_low_hz > 0.0 && band_low_hz < band_high_hz && band_high_hz < sampling_rate_hz / 2.0)) {
        throw UsageError("excitation band must satisfy 0 < low < high < sampling_rate/2");
    }
    if (sample_count() < 2) throw UsageError("excitation shorter than two samples");
}

Eigen::MatrixXd mass_matrix(const StructuralModel& model) {
    model.validate();
    const auto n = static_cast<Eigen::Index>(model.story_count());
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) m(i, i) = model.story_masses[static_cast<std::size_t>(i)];
    return m;
}

Eigen::MatrixXd stiffness_matrix(const StructuralModel& model, const std::vector<double>& multipliers) {
    model.validate();
    const std::size_t n = model.story_count();
    if (!multipliers.empty() && multipliers.size() != n) throw UsageError("multiplier count mismatch");
    Eigen::MatrixXd k = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t s = 0; s < n; ++s) {
        const double ks = model.story_stiffnesses[s] * (multipliers.empty() ? 1.0 : multipliers[s]);
        const auto i = static_cast<Eigen::Index>(s);
        k(i, i) += ks;
        if (i > 0) {
            k(i - 1, i - 1) += ks;
            k(i - 1, i) -= ks;
            k(i, i - 1) -= ks;
        }
    }
    return k;
}

namespace {

std::vector<Mode> solve_modes(const Eigen::MatrixXd& mass, const Eigen::MatrixXd& stiffness) {
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> solver(stiffness, mass);
    if (solver.info() != Eigen::Success) throw NumericalError("shear-frame eigenproblem failed");
    std::vector<Mode> modes;
    for (Eigen::Index j = 0; j < solver.eigenvalues().size(); ++j) {
        const double w2 = solver.eigenvalues()(j);
        if (!(w2 > 0.0)) throw NumericalError("stiffness matrix is not positive definite");
        Eigen::VectorXd shape = solver.eigenvectors().col(j);
        Eigen::Index peak = 0;
        shape.cwiseAbs().maxCoeff(&peak);
        shape /= shape(peak);
        modes.push_back({std::sqrt(w2) / (2.0 * std::numbers::pi), shape});
    }
    return modes;  // Eigen returns eigenvalues ascending
}

}  // namespace

std::vector<Mode> analytic_modes(const StructuralModel& model) {
    return solve_modes(mass_matrix(model), stiffness_matrix(model));
}

std::vector<Mode> analytic_modes(const StructuralModel& model, const DamageScenario& scenario) {
    scenario.validate(model.story_count());
    return solve_modes(mass_matrix(model), stiffness_matrix(model, scenario.stiffness_multipliers));
}

std::pair<double, double> rayleigh_coefficients(const StructuralModel& model,
                                                const std::vector<double>& multipliers) {
    const auto modes = solve_modes(mass_matrix(model), stiffness_matrix(model, multipliers));
    const double zeta = model.damping_ratio;
    const double w1 = 2.0 * std::numbers::pi * modes[0].frequency_hz;
    if (modes.size() == 1) return {2.0 * zeta * w1, 0.0};
    const double w2 = 2.0 * std::numbers::pi * modes[1].frequency_hz;
    return {zeta * 2.0 * w1 * w2 / (w1 + w2), zeta * 2.0 / (w1 + w2)};
}

std::vector<double> bandlimited_noise(const ExcitationSpec& spec) {
    spec.validate();
    const std::size_t n = spec.sample_count();
    const double df = spec.sampling_rate_hz / static_cast<double>(n);
    std::vector<std::complex<double>> spectrum(n, {0.0, 0.0});
    Rng rng(spec.seed);
    for (std::size_t k = 1; k <= n / 2; ++k) {
        const double f = static_cast<double>(k) * df;
        if (f < spec.band_low_hz || f > spec.band_high_hz) continue;
        const double re = rng.normal() / std::numbers::sqrt2;
        const double im = rng.normal() / std::numbers::sqrt2;
        spectrum[k] = {re, im};
        spectrum[n - k] = {re, -im};
    }
    Eigen::FFT<double> fft;
    std::vector<double> out;
    fft.inv(out, spectrum);
    const double scale = spec.amplitude * std::sqrt(static_cast<double>(n));
    for (double& v : out) v *= scale;
    return out;
}

NewmarkResult integrate_newmark(const Eigen::MatrixXd& mass, const Eigen::MatrixXd& damping,
                                const Eigen::MatrixXd& stiffness, const Eigen::MatrixXd& force,
                                double dt, const Eigen::VectorXd& x0, const Eigen::VectorXd& v0,
                                int substeps) {
    constexpr double beta = 0.25;
    constexpr double gamma = 0.5;
    const Eigen::Index dof = mass.rows();
    if (force.rows() != dof || x0.size() != dof || v0.size() != dof) {
        throw UsageError("integrate_newmark: dimension mismatch");
    }
    if (!(dt > 0.0) || substeps < 1) throw UsageError("integrate_newmark: invalid step");
    const Eigen::Index samples = force.cols();

    const double h = dt / substeps;
    const Eigen::MatrixXd effective = stiffness + (gamma / (beta * h)) * damping + (1.0 / (beta * h * h)) * mass;
    const Eigen::LDLT<Eigen::MatrixXd> solver(effective);
    const Eigen::LDLT<Eigen::MatrixXd> mass_solver(mass);

    NewmarkResult result{Eigen::MatrixXd::Zero(dof, samples), Eigen::MatrixXd::Zero(dof, samples)};
    if (samples == 0) return result;

    Eigen::VectorXd x = x0;
    Eigen::VectorXd v = v0;
    Eigen::VectorXd a = mass_solver.solve(force.col(0) - damping * v - stiffness * x);
    result.displacement.col(0) = x;
    result.acceleration.col(0) = a;

    for (Eigen::Index n = 0; n + 1 < samples; ++n) {
        for (int s = 1; s <= substeps; ++s) {
            const double w = static_cast<double>(s) / substeps;
            const Eigen::VectorXd f = (1.0 - w) * force.col(n) + w * force.col(n + 1);
            const Eigen::VectorXd rhs =
                f + mass * (x / (beta * h * h) + v / (beta * h) + (0.5 / beta - 1.0) * a) +
                damping * ((gamma / (beta * h)) * x + (gamma / beta - 1.0) * v + h * (0.5 * gamma / beta - 1.0) * a);
            const Eigen::VectorXd x_next = solver.solve(rhs);
            const Eigen::VectorXd a_next = (x_next - x) / (beta * h * h) - v / (beta * h) - (0.5 / beta - 1.0) * a;
            v += h * ((1.0 - gamma) * a + gamma * a_next);
            x = x_next;
            a = a_next;
        }
        result.displacement.col(n + 1) = x;
        result.acceleration.col(n + 1) = a;
    }
    if (!result.acceleration.allFinite()) throw NumericalError("Newmark integration produced non-finite values");
    return result;
}

std::vector<SensorRecord> simulate_force(const StructuralModel& model, const DamageScenario& scenario,
                                         const std::vector<double>& force, double sampling_rate_hz,
                                         int force_story, const SimulationOptions& options) {
    model.validate();
    scenario.validate(model.story_count());
    const auto dof = static_cast<Eigen::Index>(model.story_count());
    if (force_story < 1 || force_story > dof) {
        throw UsageError("force story " + std::to_string(force_story) + " outside 1.." + std::to_string(dof));
    }
    const Eigen::MatrixXd m = mass_matrix(model);
    const Eigen::MatrixXd k = stiffness_matrix(model, scenario.stiffness_multipliers);
    const auto [a0, a1] = rayleigh_coefficients(model, scenario.stiffness_multipliers);
    const Eigen::MatrixXd c = a0 * m + a1 * k;

    Eigen::MatrixXd f = Eigen::MatrixXd::Zero(dof, static_cast<Eigen::Index>(force.size()));
    for (std::size_t i = 0; i < force.size(); ++i) f(force_story - 1, static_cast<Eigen::Index>(i)) = force[i];

    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(dof);
    const auto response = integrate_newmark(m, c, k, f, 1.0 / sampling_rate_hz, zero, zero, options.substeps);

    std::vector<SensorRecord> records;
    for (Eigen::Index story = 0; story < dof; ++story) {
        SensorRecord rec{static_cast<int>(story + 1), {}, sampling_rate_hz};
        rec.samples.assign(response.acceleration.row(story).begin(), response.acceleration.row(story).end());
        if (std::isfinite(options.measurement_snr_db) && !rec.samples.empty()) {
            double energy = 0.0;
            for (double v : rec.samples) energy += v * v;
            const double rms = std::sqrt(energy / static_cast<double>(rec.samples.size()));
            const double sigma = rms * std::pow(10.0, -options.measurement_snr_db / 20.0);
            Rng rng(mix_seed(options.noise_seed, static_cast<std::uint64_t>(story)));
            for (double& v : rec.samples) v += sigma * rng.normal();
        }
        records.push_back(std::move(rec));
    }
    return records;
}

std::vector<SensorRecord> simulate(const StructuralModel& model, const DamageScenario& scenario,
                                   const ExcitationSpec& spec, int force_story,
                                   const SimulationOptions& options) {
    const auto force = bandlimited_noise(spec);
    return simulate_force(model, scenario, force, spec.sampling_rate_hz, force_story, options);
}

StructuralModel default_frame() {
    return StructuralModel{{1000.0, 1000.0, 1000.0, 750.0}, {1.6459e7, 1.6459e7, 1.6459e7, 1.6459e7}, 0.02};
}

std::vector<LadderEntry> default_ladder() {
    return {
        {{1, {1.0, 1.0, 1.0, 1.0}}, 120.0},
        {{2, {0.9, 1.0, 1.0, 1.0}}, 120.0},
        {{3, {0.9, 1.0, 1.0, 0.9}}, 120.0},
        {{4, {0.8, 0.8, 0.8, 0.8}}, 120.0},
        {{5, {0.6, 0.6, 0.6, 0.6}}, 120.0},
        {{6, {0.8, 0.9, 0.9, 1.0}}, 300.0},
        {{7, {0.4, 0.4, 0.4, 0.4}}, 360.0},
        {{8, {0.35, 0.35, 0.4, 0.4}}, 360.0},
        {{9, {0.3, 0.3, 0.35, 0.35}}, 360.0},
    };
}

}  // namespace shm::synth
