#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "shm/signals.hpp"

namespace shm::synth {

/// Lumped-mass shear frame: story i is connected to story i-1 (ground for i = 0)
/// by a lateral spring of stiffness story_stiffnesses[i].
struct StructuralModel {
    std::vector<double> story_masses;       // kg
    std::vector<double> story_stiffnesses;  // N/m
    double damping_ratio = 0.02;            // modal damping at the first two modes

    std::size_t story_count() const { return story_masses.size(); }
    void validate() const;
};

struct DamageScenario {
    int scenario_id = kUndamagedCase;
    std::vector<double> stiffness_multipliers;  // per story, in (0, 1]

    bool undamaged() const;
    void validate(std::size_t story_count) const;
    /// Mean stiffness reduction, 1 - mean(multipliers).
    double severity() const;
};

struct ExcitationSpec {
    double duration_s = 120.0;
    double sampling_rate_hz = 200.0;
    double band_low_hz = 5.0;
    double band_high_hz = 50.0;
    double amplitude = 1.0;  // force scale (N per unit spectral amplitude)
    std::uint64_t seed = 0;

    std::size_t sample_count() const;
    void validate() const;
};

struct SimulationOptions {
    int substeps = 5;                  // integration steps per output sample
    double measurement_snr_db = 40.0;  // additive Gaussian sensor noise; infinity disables
    std::uint64_t noise_seed = 0;
};

struct Mode {
    double frequency_hz = 0.0;
    Eigen::VectorXd shape;  // unit maximum amplitude, largest component positive
};

/// Mass and (damaged) stiffness matrices of the shear frame.
Eigen::MatrixXd mass_matrix(const StructuralModel& model);
Eigen::MatrixXd stiffness_matrix(const StructuralModel& model, const std::vector<double>& multipliers = {});

/// Solves K phi = w^2 M phi; frequencies ascending.
std::vector<Mode> analytic_modes(const StructuralModel& model);
std::vector<Mode> analytic_modes(const StructuralModel& model, const DamageScenario& scenario);

/// Rayleigh coefficients (a0, a1) so that C = a0 M + a1 K gives the model's
/// damping ratio at the first two modes.
std::pair<double, double> rayleigh_coefficients(const StructuralModel& model,
                                                const std::vector<double>& multipliers = {});

/// Gaussian noise shaped in the frequency domain: unit-variance complex
/// coefficients inside [band_low, band_high], exactly zero outside.
std::vector<double> bandlimited_noise(const ExcitationSpec& spec);

/// Newmark average-acceleration integration of M a + C v + K x = F(t) with
/// zero-order-hold-free linear force interpolation between samples.
struct NewmarkResult {
    Eigen::MatrixXd displacement;  // dof x samples, column 0 = initial state
    Eigen::MatrixXd acceleration;  // dof x samples
};
NewmarkResult integrate_newmark(const Eigen::MatrixXd& mass, const Eigen::MatrixXd& damping,
                                const Eigen::MatrixXd& stiffness, const Eigen::MatrixXd& force,
                                double dt, const Eigen::VectorXd& x0, const Eigen::VectorXd& v0,
                                int substeps = 1);

/// Story accelerations (sensor_id = story number, 1-based) at the excitation rate.
std::vector<SensorRecord> simulate(const StructuralModel& model, const DamageScenario& scenario,
                                   const ExcitationSpec& spec, int force_story,
                                   const SimulationOptions& options = {});

/// Response to an explicit force history applied at one story.
std::vector<SensorRecord> simulate_force(const StructuralModel& model, const DamageScenario& scenario,
                                         const std::vector<double>& force, double sampling_rate_hz,
                                         int force_story, const SimulationOptions& options = {});

/// Four-story frame with 3 x 1000 kg + 750 kg floors, stiffness tuned so the
/// first mode sits near 7.5 Hz.
StructuralModel default_frame();

struct LadderEntry {
    DamageScenario scenario;
    double duration_s = 120.0;
};

/// Nine-case ladder: case 1 undamaged, cases 2-9 graded stiffness reductions
/// down to ~0.3, with cases 2 and 6 deliberately mild.
std::vector<LadderEntry> default_ladder();

}  // namespace shm::synth
