#pragma once

#include <complex>
#include <cstddef>
#include <iosfwd>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "shm/signals.hpp"

namespace shm::fdd {

struct WelchOptions {
    std::size_t nfft = 1024;
    double overlap = 0.5;
};

/// One-sided Hann-windowed cross-spectral density matrices.
struct CpsdEstimate {
    std::vector<double> frequencies;            // Hz, nfft/2 + 1 bins
    std::vector<Eigen::MatrixXcd> matrices;     // channels x channels per bin
    std::size_t nfft = 0;
    double overlap = 0.0;
    std::size_t segments = 0;
    double sampling_rate_hz = 0.0;
};

CpsdEstimate welch_cpsd(std::span<const SensorRecord> records, const WelchOptions& options = {});

/// Hann window of length n (periodic form used for spectral averaging).
std::vector<double> hann_window(std::size_t n);

/// Singular values per bin, descending (rows: bins, cols: channels).
Eigen::MatrixXd svd_spectrum(const CpsdEstimate& cpsd);

struct PeakOptions {
    double low_hz = 1.0;
    double high_hz = 60.0;
    double min_prominence_db = 6.0;  // above the local median
    double median_half_width_hz = 2.0;
    double min_separation_hz = 0.5;
    double dynamic_range_db = 60.0;  // below the strongest in-band peak: ignored
};

/// Local maxima of `spectrum` inside the band whose height exceeds the local
/// median by the prominence threshold and lie within the dynamic range of the
/// strongest one, refined by a 3-point parabola on the log spectrum. Ascending.
std::vector<double> pick_peaks(std::span<const double> frequencies, std::span<const double> spectrum,
                               const PeakOptions& options = {});

struct ModalEstimate {
    std::vector<double> frequencies;      // picked modes, ascending
    std::vector<double> first_singular;   // first singular value per bin
    std::vector<double> bin_frequencies;
};

ModalEstimate identify(std::span<const SensorRecord> records, const WelchOptions& welch = {},
                       const PeakOptions& peaks = {});

struct ShiftEntry {
    std::size_t mode = 0;  // 1-based
    double undamaged_hz = 0.0;
    std::optional<double> damaged_hz;
    std::optional<double> percent;
};

/// Pairs modes by ascending order. A pair whose relative shift exceeds
/// `max_relative_shift` (fraction) is reported as missing.
std::vector<ShiftEntry> frequency_shift_table(std::span<const double> undamaged, std::span<const double> damaged,
                                              double max_relative_shift = std::numeric_limits<double>::infinity());

double percent_shift(double undamaged_hz, double damaged_hz);

/// Table of per-case modal frequencies with variations from the reference case.
struct FrequencyTable {
    int reference_case = kUndamagedCase;
    std::map<int, std::vector<ShiftEntry>> cases;
    std::size_t mode_count = 2;
};

void write_frequency_text(std::ostream& out, const FrequencyTable& table);
void write_frequency_csv(std::ostream& out, const FrequencyTable& table);
FrequencyTable read_frequency_csv(std::istream& in);

void write_spectrum_csv(std::ostream& out, const ModalEstimate& estimate);

}  // namespace shm::fdd
