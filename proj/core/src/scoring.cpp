#include "shm/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <string>

#include "shm/error.hpp"

namespace shm::scoring {

double pod(std::size_t outlier_count, std::size_t frame_count) {
    if (frame_count == 0) throw UsageError("pod: frame count must be positive");
    if (outlier_count > frame_count) throw UsageError("pod: outlier count exceeds frame count");
    return 100.0 * static_cast<double>(outlier_count) / static_cast<double>(frame_count);
}

PodSummary pod_avg(std::span<const double> pods) {
    if (pods.empty()) throw UsageError("pod_avg: no sensor values");
    PodSummary s;
    s.min = *std::min_element(pods.begin(), pods.end());
    s.max = *std::max_element(pods.begin(), pods.end());
    double sum = 0.0;
    for (double p : pods) sum += p;
    s.mean = sum / static_cast<double>(pods.size());
    if (pods.size() > 1) {
        double ss = 0.0;
        for (double p : pods) ss += (p - s.mean) * (p - s.mean);
        s.stddev = std::sqrt(ss / static_cast<double>(pods.size() - 1));
    }
    // Keep the mean inside [min, max] despite rounding.
    s.mean = std::clamp(s.mean, s.min, s.max);
    return s;
}

const PodCell& PodReport::cell(int sensor, int case_id) const {
    const auto it = cells.find({sensor, case_id});
    if (it == cells.end()) {
        throw UsageError("PoD report has no entry for sensor " + std::to_string(sensor) + ", case " +
                         std::to_string(case_id));
    }
    return it->second;
}

PodSummary PodReport::summary(int case_id) const {
    std::vector<double> pods;
    for (int s : sensors) pods.push_back(cell(s, case_id).pod());
    return pod_avg(pods);
}

LatentSummary summarize_latents(const Eigen::MatrixXd& means) {
    if (means.cols() < 2) throw UsageError("latent_summary: need at least two frames");
    LatentSummary s;
    s.mean = means.rowwise().mean();
    const Eigen::MatrixXd centered = means.colwise() - s.mean;
    s.variance = (centered.array().square().rowwise().sum() / static_cast<double>(means.cols())).matrix();
    s.variance = s.variance.cwiseMax(kVarianceFloor);
    return s;
}

LatentSummary latent_summary(const vae::VaeModel& model, std::span<const Frame> frames) {
    if (frames.size() < 2) throw UsageError("latent_summary: need at least two frames");
    return summarize_latents(vae::encode_means(model, vae::frames_to_matrix(frames)));
}

double kl_between(const LatentSummary& a, const LatentSummary& b) {
    if (a.mean.size() != b.mean.size() || a.variance.size() != b.variance.size() ||
        a.mean.size() != a.variance.size()) {
        throw UsageError("kl_between: dimension mismatch");
    }
    const auto va = a.variance.array();
    const auto vb = b.variance.array();
    const double kl = 0.5 * ((vb / va).log() + (va + (a.mean - b.mean).array().square()) / vb - 1.0).sum();
    return std::max(kl, 0.0);
}

double mean_posterior_kl(const vae::VaeModel& model, std::span<const Frame> frames) {
    if (frames.empty()) throw UsageError("mean_posterior_kl: no frames");
    if (model.mode != vae::Mode::Variational) return 0.0;
    const Eigen::MatrixXd head = model.encoder.forward(vae::frames_to_matrix(frames)).output();
    const Eigen::Index L = model.latent_dim;
    double total = 0.0;
    for (Eigen::Index j = 0; j < head.cols(); ++j) {
        total += vae::kl_to_standard_normal(head.col(j).head(L), head.col(j).tail(L));
    }
    return total / static_cast<double>(head.cols());
}

double KlTable::value(int sensor, int case_id) const {
    const auto it = values.find({sensor, case_id});
    if (it == values.end()) throw UsageError("KL table has no entry for sensor " + std::to_string(sensor));
    return it->second;
}

double KlTable::average(int case_id) const {
    if (sensors.empty()) throw UsageError("KL table has no sensors");
    double sum = 0.0;
    for (int s : sensors) sum += value(s, case_id);
    return sum / static_cast<double>(sensors.size());
}

namespace {

const SensorPipeline& pipeline_for(std::span<const SensorPipeline> pipelines, int sensor) {
    for (const auto& p : pipelines) {
        if (p.sensor == sensor) return p;
    }
    throw DataError("no trained model for sensor " + std::to_string(sensor));
}

}  // namespace

ScoreResult build_report(std::span<const SensorPipeline> pipelines, std::span<const CaseFrames> scored,
                         std::span<const CaseFrames> reference, KlMethod method) {
    ScoreResult result;
    std::set<int> sensor_set;
    std::set<int> case_set;
    for (const auto& cf : scored) {
        sensor_set.insert(cf.sensor);
        case_set.insert(cf.case_id);
    }
    result.pod.sensors.assign(sensor_set.begin(), sensor_set.end());
    result.pod.cases.assign(case_set.begin(), case_set.end());

    for (const auto& cf : scored) {
        const auto& p = pipeline_for(pipelines, cf.sensor);
        const auto feats = features::extract(cf.frames, p.vae, p.scaler);
        PodCell cell{feats.size(), 0};
        for (const auto& f : feats) {
            const auto v = f.values();
            if (ocsvm::classify(p.ocsvm, v) == ocsvm::Label::Outlier) ++cell.outlier_count;
        }
        result.pod.cells[{cf.sensor, cf.case_id}] = cell;
    }
    for (int s : result.pod.sensors) {
        for (int c : result.pod.cases) {
            if (!result.pod.cells.contains({s, c})) {
                throw DataError("missing frames for sensor " + std::to_string(s) + ", case " + std::to_string(c));
            }
        }
    }

    result.kl.sensors = result.pod.sensors;
    for (int c : result.pod.cases) {
        if (c != kUndamagedCase) result.kl.cases.push_back(c);
    }
    for (int s : result.kl.sensors) {
        const auto& p = pipeline_for(pipelines, s);
        const CaseFrames* ref = nullptr;
        for (const auto& r : reference) {
            if (r.sensor == s && r.case_id == kUndamagedCase) ref = &r;
        }
        if (ref == nullptr) throw DataError("no undamaged reference frames for sensor " + std::to_string(s));
        const LatentSummary ref_summary = latent_summary(p.vae, ref->frames);
        const double ref_prior_kl = method == KlMethod::PosteriorPrior ? mean_posterior_kl(p.vae, ref->frames) : 0.0;
        for (const auto& cf : scored) {
            if (cf.sensor != s || cf.case_id == kUndamagedCase) continue;
            double v = 0.0;
            if (method == KlMethod::LatentGaussian) {
                v = kl_between(latent_summary(p.vae, cf.frames), ref_summary);
            } else {
                v = std::abs(mean_posterior_kl(p.vae, cf.frames) - ref_prior_kl);
            }
            result.kl.values[{s, cf.case_id}] = v;
        }
    }
    return result;
}

namespace {

std::string fixed2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string fixed3(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

}  // namespace

void write_pod_text(std::ostream& out, const PodReport& report) {
    out << std::left << std::setw(10) << "Sensor";
    for (int c : report.cases) out << std::right << std::setw(18) << ("Case " + std::to_string(c));
    out << '\n';
    for (int s : report.sensors) {
        out << std::left << std::setw(10) << s;
        for (int c : report.cases) out << std::right << std::setw(18) << fixed2(report.cell(s, c).pod());
        out << '\n';
    }
    out << std::left << std::setw(10) << "PoD_avg";
    for (int c : report.cases) {
        const auto sm = report.summary(c);
        out << std::right << std::setw(18) << (fixed2(sm.mean) + " +- " + fixed2(sm.stddev));
    }
    out << '\n' << std::left << std::setw(10) << "min";
    for (int c : report.cases) out << std::right << std::setw(18) << fixed2(report.summary(c).min);
    out << '\n' << std::left << std::setw(10) << "max";
    for (int c : report.cases) out << std::right << std::setw(18) << fixed2(report.summary(c).max);
    out << '\n';
}

void write_pod_csv(std::ostream& out, const PodReport& report) {
    out << "sensor,case,frame_count,outlier_count,pod\n";
    for (int s : report.sensors) {
        for (int c : report.cases) {
            const auto& cell = report.cell(s, c);
            out << s << ',' << c << ',' << cell.frame_count << ',' << cell.outlier_count << ',' << fixed2(cell.pod())
                << '\n';
        }
    }
}

PodReport read_pod_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != "sensor,case,frame_count,outlier_count,pod") {
        throw DataError("PoD CSV: missing header");
    }
    PodReport report;
    std::set<int> sensors;
    std::set<int> cases;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        std::istringstream ss(line);
        int s = 0, c = 0;
        PodCell cell;
        double pod_value = 0.0;
        char c1 = 0, c2 = 0, c3 = 0, c4 = 0;
        if (!(ss >> s >> c1 >> c >> c2 >> cell.frame_count >> c3 >> cell.outlier_count >> c4 >> pod_value) ||
            c1 != ',' || c2 != ',' || c3 != ',' || c4 != ',' || cell.frame_count == 0 ||
            cell.outlier_count > cell.frame_count) {
            throw DataError("PoD CSV: malformed row " + std::to_string(row));
        }
        report.cells[{s, c}] = cell;
        sensors.insert(s);
        cases.insert(c);
    }
    report.sensors.assign(sensors.begin(), sensors.end());
    report.cases.assign(cases.begin(), cases.end());
    return report;
}

void write_kl_text(std::ostream& out, const KlTable& table) {
    out << std::left << std::setw(10) << "Sensor";
    for (int c : table.cases) out << std::right << std::setw(10) << ("Case " + std::to_string(c));
    out << '\n';
    for (int s : table.sensors) {
        out << std::left << std::setw(10) << s;
        for (int c : table.cases) out << std::right << std::setw(10) << fixed3(table.value(s, c));
        out << '\n';
    }
    out << std::left << std::setw(10) << "KL_avg";
    for (int c : table.cases) out << std::right << std::setw(10) << fixed3(table.average(c));
    out << '\n';
}

void write_kl_csv(std::ostream& out, const KlTable& table) {
    out << "sensor,case,kl\n" << std::setprecision(17);
    for (int s : table.sensors) {
        for (int c : table.cases) out << s << ',' << c << ',' << table.value(s, c) << '\n';
    }
}

KlTable read_kl_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != "sensor,case,kl") throw DataError("KL CSV: missing header");
    KlTable table;
    std::set<int> sensors;
    std::set<int> cases;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        std::istringstream ss(line);
        int s = 0, c = 0;
        double v = 0.0;
        char c1 = 0, c2 = 0;
        if (!(ss >> s >> c1 >> c >> c2 >> v) || c1 != ',' || c2 != ',') {
            throw DataError("KL CSV: malformed row " + std::to_string(row));
        }
        table.values[{s, c}] = v;
        sensors.insert(s);
        cases.insert(c);
    }
    table.sensors.assign(sensors.begin(), sensors.end());
    table.cases.assign(cases.begin(), cases.end());
    return table;
}

}  // namespace shm::scoring
