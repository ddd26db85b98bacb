#include "shm/fdd.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/FFT>

#include "shm/error.hpp"

namespace shm::fdd {

std::vector<double> hann_window(std::size_t n) {
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) {
        w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
    }
    return w;
}

CpsdEstimate welch_cpsd(std::span<const SensorRecord> records, const WelchOptions& options) {
    if (records.empty()) throw UsageError("welch_cpsd: no records");
    const std::size_t nfft = options.nfft;
    if (nfft < 2 || (nfft & (nfft - 1)) != 0) throw UsageError("welch_cpsd: nfft must be a power of two");
    if (!(options.overlap >= 0.0 && options.overlap < 1.0)) throw UsageError("welch_cpsd: overlap must lie in [0, 1)");
    const std::size_t length = records.front().samples.size();
    const double fs = records.front().sampling_rate_hz;
    for (const auto& r : records) {
        if (r.samples.size() != length || r.sampling_rate_hz != fs) {
            throw DataError("welch_cpsd: records differ in length or sampling rate");
        }
    }
    if (length < nfft) {
        throw DataError("welch_cpsd: records of " + std::to_string(length) + " samples are shorter than nfft " +
                        std::to_string(nfft));
    }

    const auto step = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(static_cast<double>(nfft) * (1.0 - options.overlap))));
    const std::size_t segments = (length - nfft) / step + 1;
    const std::size_t bins = nfft / 2 + 1;
    const auto channels = static_cast<Eigen::Index>(records.size());
    const auto window = hann_window(nfft);
    double window_power = 0.0;
    for (double w : window) window_power += w * w;

    Eigen::MatrixXcd spectra(channels, static_cast<Eigen::Index>(bins));
    std::vector<Eigen::MatrixXcd> acc(bins, Eigen::MatrixXcd::Zero(channels, channels));
    Eigen::FFT<double> fft;
    std::vector<double> buffer(nfft);
    std::vector<std::complex<double>> out;
    for (std::size_t seg = 0; seg < segments; ++seg) {
        const std::size_t start = seg * step;
        for (Eigen::Index c = 0; c < channels; ++c) {
            const auto& x = records[static_cast<std::size_t>(c)].samples;
            for (std::size_t i = 0; i < nfft; ++i) buffer[i] = x[start + i] * window[i];
            fft.fwd(out, buffer);
            for (std::size_t k = 0; k < bins; ++k) spectra(c, static_cast<Eigen::Index>(k)) = out[k];
        }
        for (std::size_t k = 0; k < bins; ++k) {
            const auto col = spectra.col(static_cast<Eigen::Index>(k));
            acc[k] += col * col.adjoint();
        }
    }

    CpsdEstimate est;
    est.nfft = nfft;
    est.overlap = options.overlap;
    est.segments = segments;
    est.sampling_rate_hz = fs;
    est.frequencies.resize(bins);
    est.matrices.resize(bins);
    for (std::size_t k = 0; k < bins; ++k) {
        est.frequencies[k] = static_cast<double>(k) * fs / static_cast<double>(nfft);
        const double one_sided = (k == 0 || k == bins - 1) ? 1.0 : 2.0;
        Eigen::MatrixXcd g = acc[k] * (one_sided / (fs * window_power * static_cast<double>(segments)));
        // Enforce exact Hermitian symmetry and a real diagonal.
        for (Eigen::Index i = 0; i < channels; ++i) {
            g(i, i) = std::complex<double>(g(i, i).real(), 0.0);
            for (Eigen::Index j = i + 1; j < channels; ++j) g(j, i) = std::conj(g(i, j));
        }
        est.matrices[k] = std::move(g);
    }
    return est;
}

Eigen::MatrixXd svd_spectrum(const CpsdEstimate& cpsd) {
    if (cpsd.matrices.empty()) return {};
    const Eigen::Index channels = cpsd.matrices.front().rows();
    Eigen::MatrixXd sv(static_cast<Eigen::Index>(cpsd.matrices.size()), channels);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver;
    for (std::size_t k = 0; k < cpsd.matrices.size(); ++k) {
        solver.compute(cpsd.matrices[k], Eigen::EigenvaluesOnly);
        Eigen::VectorXd values = solver.eigenvalues().cwiseAbs();
        std::sort(values.begin(), values.end(), std::greater<>());
        sv.row(static_cast<Eigen::Index>(k)) = values.transpose();
    }
    return sv;
}

std::vector<double> pick_peaks(std::span<const double> frequencies, std::span<const double> spectrum,
                               const PeakOptions& options) {
    if (frequencies.size() != spectrum.size()) throw UsageError("pick_peaks: length mismatch");
    if (frequencies.size() < 3) throw UsageError("pick_peaks: spectrum too short");
    const double df = frequencies[1] - frequencies[0];
    std::size_t lo = frequencies.size();
    std::size_t hi = 0;
    for (std::size_t k = 0; k < frequencies.size(); ++k) {
        if (frequencies[k] >= options.low_hz && frequencies[k] <= options.high_hz) {
            lo = std::min(lo, k);
            hi = std::max(hi, k);
        }
    }
    if (lo > hi) throw UsageError("pick_peaks: empty analysis band");

    const auto half = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(options.median_half_width_hz / df)));
    struct Candidate {
        double freq;
        double height;
    };
    std::vector<Candidate> candidates;
    std::vector<double> window;
    for (std::size_t k = std::max<std::size_t>(lo, 1); k <= hi && k + 1 < spectrum.size(); ++k) {
        const double s = spectrum[k];
        if (!(s > spectrum[k - 1] && s >= spectrum[k + 1]) || !(s > 0.0)) continue;
        const std::size_t a = k >= half ? k - half : 0;
        const std::size_t b = std::min(spectrum.size() - 1, k + half);
        window.assign(spectrum.begin() + static_cast<std::ptrdiff_t>(a), spectrum.begin() + static_cast<std::ptrdiff_t>(b + 1));
        std::nth_element(window.begin(), window.begin() + static_cast<std::ptrdiff_t>(window.size() / 2), window.end());
        const double median = window[window.size() / 2];
        if (!(median > 0.0) || 10.0 * std::log10(s / median) < options.min_prominence_db) continue;

        double offset = 0.0;
        const double l = std::log(std::max(spectrum[k - 1], std::numeric_limits<double>::min()));
        const double c = std::log(s);
        const double r = std::log(std::max(spectrum[k + 1], std::numeric_limits<double>::min()));
        const double denom = l - 2.0 * c + r;
        if (denom < 0.0) offset = std::clamp(0.5 * (l - r) / denom, -0.5, 0.5);
        candidates.push_back({frequencies[k] + offset * df, s});
    }

    std::sort(candidates.begin(), candidates.end(), [](const Candidate& x, const Candidate& y) { return x.height > y.height; });
    std::vector<double> accepted;
    for (const auto& cand : candidates) {
        if (10.0 * std::log10(candidates.front().height / cand.height) > options.dynamic_range_db) break;
        const bool clear = std::none_of(accepted.begin(), accepted.end(), [&](double f) {
            return std::abs(f - cand.freq) < options.min_separation_hz;
        });
        if (clear) accepted.push_back(cand.freq);
    }
    std::sort(accepted.begin(), accepted.end());
    return accepted;
}

ModalEstimate identify(std::span<const SensorRecord> records, const WelchOptions& welch, const PeakOptions& peaks) {
    const auto cpsd = welch_cpsd(records, welch);
    const Eigen::MatrixXd sv = svd_spectrum(cpsd);
    ModalEstimate est;
    est.bin_frequencies = cpsd.frequencies;
    est.first_singular.assign(sv.col(0).begin(), sv.col(0).end());
    est.frequencies = pick_peaks(est.bin_frequencies, est.first_singular, peaks);
    return est;
}

double percent_shift(double undamaged_hz, double damaged_hz) {
    if (undamaged_hz == 0.0) throw UsageError("percent_shift: zero undamaged frequency");
    return 100.0 * (damaged_hz - undamaged_hz) / undamaged_hz;
}

std::vector<ShiftEntry> frequency_shift_table(std::span<const double> undamaged, std::span<const double> damaged,
                                              double max_relative_shift) {
    std::vector<ShiftEntry> out;
    for (std::size_t i = 0; i < undamaged.size(); ++i) {
        ShiftEntry e{i + 1, undamaged[i], std::nullopt, std::nullopt};
        if (i < damaged.size()) {
            const double pct = percent_shift(undamaged[i], damaged[i]);
            if (std::abs(pct) <= 100.0 * max_relative_shift) {
                e.damaged_hz = damaged[i];
                e.percent = pct;
            }
        }
        out.push_back(e);
    }
    return out;
}

namespace {

std::string fmt2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

}  // namespace

void write_frequency_text(std::ostream& out, const FrequencyTable& table) {
    out << std::left << std::setw(6) << "Mode";
    for (const auto& [c, entries] : table.cases) out << std::right << std::setw(20) << ("Case " + std::to_string(c));
    out << '\n';
    for (std::size_t m = 0; m < table.mode_count; ++m) {
        out << std::left << std::setw(6) << (m + 1);
        for (const auto& [c, entries] : table.cases) {
            std::string cell = "-";
            if (m < entries.size() && entries[m].damaged_hz) {
                cell = fmt2(*entries[m].damaged_hz) + " (" + fmt2(*entries[m].percent) + ")";
            }
            out << std::right << std::setw(20) << cell;
        }
        out << '\n';
    }
}

void write_frequency_csv(std::ostream& out, const FrequencyTable& table) {
    out << "case,mode,reference_hz,frequency_hz,variation_percent\n" << std::setprecision(17);
    for (const auto& [c, entries] : table.cases) {
        for (const auto& e : entries) {
            out << c << ',' << e.mode << ',' << e.undamaged_hz << ',';
            if (e.damaged_hz) out << *e.damaged_hz;
            out << ',';
            if (e.percent) out << *e.percent;
            out << '\n';
        }
    }
}

FrequencyTable read_frequency_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != "case,mode,reference_hz,frequency_hz,variation_percent") {
        throw DataError("frequency CSV: missing header");
    }
    FrequencyTable table;
    table.mode_count = 0;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() == 4 && line.back() == ',') cells.emplace_back();
        if (cells.size() != 5) throw DataError("frequency CSV: malformed row " + std::to_string(row));
        try {
            const int c = std::stoi(cells[0]);
            ShiftEntry e;
            e.mode = static_cast<std::size_t>(std::stoul(cells[1]));
            e.undamaged_hz = std::stod(cells[2]);
            if (!cells[3].empty()) e.damaged_hz = std::stod(cells[3]);
            if (!cells[4].empty()) e.percent = std::stod(cells[4]);
            table.cases[c].push_back(e);
            table.mode_count = std::max(table.mode_count, e.mode);
        } catch (const std::logic_error&) {
            throw DataError("frequency CSV: malformed row " + std::to_string(row));
        }
    }
    return table;
}

void write_spectrum_csv(std::ostream& out, const ModalEstimate& estimate) {
    out << "frequency_hz,first_singular_value\n" << std::setprecision(17);
    for (std::size_t k = 0; k < estimate.bin_frequencies.size(); ++k) {
        out << estimate.bin_frequencies[k] << ',' << estimate.first_singular[k] << '\n';
    }
}

}  // namespace shm::fdd
