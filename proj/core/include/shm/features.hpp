#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "shm/signals.hpp"
#include "shm/vae.hpp"

namespace shm::features {

inline constexpr double kOrsrFloorDb = -120.0;

/// Damage-sensitive features of one frame.
struct FeatureVector {
    double mse = 0.0;
    double orsr_db = 0.0;
    int sensor = 0;
    int case_id = kUndamagedCase;
    std::size_t index = 0;

    std::array<double, 2> values() const { return {mse, orsr_db}; }
};

double mse_feature(std::span<const double> x, std::span<const double> x_hat);

/// 10 log10(sum x^2 / sum x_hat^2). A zero-energy original returns
/// kOrsrFloorDb and bumps orsr_floor_hits().
double orsr_feature(std::span<const double> x, std::span<const double> x_hat);
std::size_t orsr_floor_hits();

/// Raw (unstandardized) features, order preserved.
std::vector<FeatureVector> extract_raw(std::span<const Frame> frames, const vae::VaeModel& model);

/// Per-component standardization fitted on undamaged training features.
struct FeatureScaler {
    std::array<double, 2> mean{0.0, 0.0};
    std::array<double, 2> scale{1.0, 1.0};

    static FeatureScaler fit(std::span<const FeatureVector> features);
    FeatureVector apply(const FeatureVector& f) const;
    std::vector<FeatureVector> apply(std::span<const FeatureVector> features) const;
};

std::vector<FeatureVector> extract(std::span<const Frame> frames, const vae::VaeModel& model,
                                   const FeatureScaler& scaler);

/// Points for the one-class SVM.
std::vector<std::vector<double>> as_points(std::span<const FeatureVector> features);

/// CSV dump: sensor,case,index,mse,orsr_db.
void write_csv(std::ostream& out, std::span<const FeatureVector> features);
std::vector<FeatureVector> read_csv(std::istream& in);

}  // namespace shm::features
