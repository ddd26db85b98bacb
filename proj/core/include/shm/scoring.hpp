#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "shm/features.hpp"
#include "shm/ocsvm.hpp"
#include "shm/signals.hpp"
#include "shm/vae.hpp"

namespace shm::scoring {

/// Percentage of outlier frames, 100 c / n.
double pod(std::size_t outlier_count, std::size_t frame_count);

struct PodSummary {
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation (n - 1); 0 for a single sensor
    double min = 0.0;
    double max = 0.0;
};

PodSummary pod_avg(std::span<const double> pods);

struct PodCell {
    std::size_t frame_count = 0;
    std::size_t outlier_count = 0;

    double pod() const { return scoring::pod(outlier_count, frame_count); }
};

struct PodReport {
    std::vector<int> sensors;  // row order
    std::vector<int> cases;    // column order
    std::map<std::pair<int, int>, PodCell> cells;  // (sensor, case)

    const PodCell& cell(int sensor, int case_id) const;
    PodSummary summary(int case_id) const;
};

/// Diagonal Gaussian fitted to encoder means of one case.
struct LatentSummary {
    Eigen::VectorXd mean;
    Eigen::VectorXd variance;  // population variance, floored at kVarianceFloor
};

inline constexpr double kVarianceFloor = 1e-12;

LatentSummary latent_summary(const vae::VaeModel& model, std::span<const Frame> frames);
LatentSummary summarize_latents(const Eigen::MatrixXd& means);

/// KL(a || b) between diagonal Gaussians.
double kl_between(const LatentSummary& a, const LatentSummary& b);

/// Alternative KL diagnostic: mean per-frame KL of the posterior from N(0, I).
double mean_posterior_kl(const vae::VaeModel& model, std::span<const Frame> frames);

enum class KlMethod { LatentGaussian, PosteriorPrior };

struct KlTable {
    std::vector<int> sensors;
    std::vector<int> cases;  // damaged cases only
    std::map<std::pair<int, int>, double> values;

    double value(int sensor, int case_id) const;
    double average(int case_id) const;
};

/// Everything fitted for one sensor.
struct SensorPipeline {
    int sensor = 0;
    vae::VaeModel vae;
    features::FeatureScaler scaler;
    ocsvm::OcSvmModel ocsvm;
};

/// Normalized frames of one (sensor, case), already restricted to the frames
/// to score (the withheld holdout for the undamaged case).
struct CaseFrames {
    int sensor = 0;
    int case_id = 0;
    std::vector<Frame> frames;
};

struct ScoreResult {
    PodReport pod;
    KlTable kl;
};

/// Builds the PoD matrix and the KL table. KL uses every undamaged frame
/// passed under `reference` as the case-1 distribution.
ScoreResult build_report(std::span<const SensorPipeline> pipelines, std::span<const CaseFrames> scored,
                         std::span<const CaseFrames> reference, KlMethod method = KlMethod::LatentGaussian);

/// Plain-text tables: sensor rows, case columns, PoD_avg (mean +- std) footer.
void write_pod_text(std::ostream& out, const PodReport& report);
void write_pod_csv(std::ostream& out, const PodReport& report);
PodReport read_pod_csv(std::istream& in);

void write_kl_text(std::ostream& out, const KlTable& table);
void write_kl_csv(std::ostream& out, const KlTable& table);
KlTable read_kl_csv(std::istream& in);

}  // namespace shm::scoring
