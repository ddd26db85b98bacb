#include "shm/features.hpp"

#include <atomic>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "shm/error.hpp"

namespace shm::features {

namespace {
std::atomic<std::size_t> g_floor_hits{0};
}

double mse_feature(std::span<const double> x, std::span<const double> x_hat) {
    if (x.size() != x_hat.size()) throw UsageError("mse_feature: length mismatch");
    if (x.empty()) throw UsageError("mse_feature: empty frame");
    double sum = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) sum += (x[i] - x_hat[i]) * (x[i] - x_hat[i]);
    return sum / static_cast<double>(x.size());
}

double orsr_feature(std::span<const double> x, std::span<const double> x_hat) {
    if (x.size() != x_hat.size()) throw UsageError("orsr_feature: length mismatch");
    double ex = 0.0;
    double er = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        ex += x[i] * x[i];
        er += x_hat[i] * x_hat[i];
    }
    if (!(ex > 0.0)) {
        g_floor_hits.fetch_add(1, std::memory_order_relaxed);
        return kOrsrFloorDb;
    }
    if (!(er > 0.0)) throw NumericalError("orsr_feature: zero-energy reconstruction");
    return 10.0 * std::log10(ex / er);
}

std::size_t orsr_floor_hits() { return g_floor_hits.load(std::memory_order_relaxed); }

std::vector<FeatureVector> extract_raw(std::span<const Frame> frames, const vae::VaeModel& model) {
    std::vector<FeatureVector> out;
    if (frames.empty()) return out;
    const Eigen::MatrixXd x = vae::frames_to_matrix(frames);
    const Eigen::MatrixXd x_hat = vae::reconstruct_batch(model, x);
    out.reserve(frames.size());
    for (std::size_t j = 0; j < frames.size(); ++j) {
        const auto col = static_cast<Eigen::Index>(j);
        const std::span<const double> a(x.col(col).data(), static_cast<std::size_t>(x.rows()));
        const std::span<const double> b(x_hat.col(col).data(), static_cast<std::size_t>(x_hat.rows()));
        out.push_back({mse_feature(a, b), orsr_feature(a, b), frames[j].source_sensor, frames[j].source_case,
                       frames[j].index});
    }
    return out;
}

FeatureScaler FeatureScaler::fit(std::span<const FeatureVector> features) {
    if (features.size() < 2) throw UsageError("FeatureScaler::fit: need at least two features");
    FeatureScaler s;
    const double n = static_cast<double>(features.size());
    for (std::size_t c = 0; c < 2; ++c) {
        double mean = 0.0;
        for (const auto& f : features) mean += f.values()[c];
        mean /= n;
        double var = 0.0;
        for (const auto& f : features) var += (f.values()[c] - mean) * (f.values()[c] - mean);
        var /= n;
        s.mean[c] = mean;
        s.scale[c] = var > 0.0 ? std::sqrt(var) : 1.0;
    }
    return s;
}

FeatureVector FeatureScaler::apply(const FeatureVector& f) const {
    FeatureVector out = f;
    out.mse = (f.mse - mean[0]) / scale[0];
    out.orsr_db = (f.orsr_db - mean[1]) / scale[1];
    return out;
}

std::vector<FeatureVector> FeatureScaler::apply(std::span<const FeatureVector> features) const {
    std::vector<FeatureVector> out;
    out.reserve(features.size());
    for (const auto& f : features) out.push_back(apply(f));
    return out;
}

std::vector<FeatureVector> extract(std::span<const Frame> frames, const vae::VaeModel& model,
                                   const FeatureScaler& scaler) {
    return scaler.apply(extract_raw(frames, model));
}

std::vector<std::vector<double>> as_points(std::span<const FeatureVector> features) {
    std::vector<std::vector<double>> pts;
    pts.reserve(features.size());
    for (const auto& f : features) pts.push_back({f.mse, f.orsr_db});
    return pts;
}

void write_csv(std::ostream& out, std::span<const FeatureVector> features) {
    out << "sensor,case,index,mse,orsr_db\n" << std::setprecision(17);
    for (const auto& f : features) {
        out << f.sensor << ',' << f.case_id << ',' << f.index << ',' << f.mse << ',' << f.orsr_db << '\n';
    }
}

std::vector<FeatureVector> read_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line.rfind("sensor,case,index,mse,orsr_db", 0) != 0) {
        throw DataError("feature CSV: missing header");
    }
    std::vector<FeatureVector> out;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        std::istringstream ss(line);
        FeatureVector f;
        char c1 = 0, c2 = 0, c3 = 0, c4 = 0;
        if (!(ss >> f.sensor >> c1 >> f.case_id >> c2 >> f.index >> c3 >> f.mse >> c4 >> f.orsr_db) ||
            c1 != ',' || c2 != ',' || c3 != ',' || c4 != ',') {
            throw DataError("feature CSV: malformed row " + std::to_string(row));
        }
        out.push_back(f);
    }
    return out;
}

}  // namespace shm::features
