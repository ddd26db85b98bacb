#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <span>
#include <vector>

namespace shm {

/// One sensor's raw acceleration time series.
struct SensorRecord {
    int sensor_id = 0;
    std::vector<double> samples;
    double sampling_rate_hz = 200.0;
};

/// Structural case labels: 1 is the undamaged reference, 2.. are damage scenarios.
inline constexpr int kUndamagedCase = 1;

/// A fixed-length window of one sensor record.
struct Frame {
    std::vector<double> values;
    int source_sensor = 0;
    int source_case = kUndamagedCase;
    std::size_t index = 0;  // ordinal within the sensor record
};

/// Min-max statistics of one sensor's undamaged training frames.
struct NormalizationStats {
    double min = 0.0;
    double max = 1.0;

    bool valid() const;
};

struct SplitPlan {
    int fold_count = 10;
    double holdout_fraction = 0.2;
    std::uint64_t seed = 0;
};

/// Index partition of a frame list.
struct IndexSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Reads a CSV whose header row lists integer sensor ids and whose body rows
/// hold one finite sample per sensor. Throws DataError naming row/column.
std::vector<SensorRecord> load_csv(const std::filesystem::path& path,
                                   double sampling_rate_hz = 200.0);
std::vector<SensorRecord> parse_csv(std::istream& in, double sampling_rate_hz = 200.0,
                                    const std::string& source_name = "<stream>");

/// Writes records in the format load_csv reads (17 significant digits).
void write_csv(std::ostream& out, std::span<const SensorRecord> records);
void save_csv(const std::filesystem::path& path, std::span<const SensorRecord> records);

/// Splits a record into floor(d/s) contiguous non-overlapping frames; the
/// trailing remainder is dropped.
std::vector<Frame> window(const SensorRecord& record, std::size_t frame_length,
                          int case_id = kUndamagedCase);

NormalizationStats fit_normalization(std::span<const Frame> frames);

/// Maps v to (v - min)/(max - min), clamped to [0, 1].
Frame apply_normalization(const Frame& frame, const NormalizationStats& stats);
std::vector<Frame> apply_normalization(std::span<const Frame> frames,
                                       const NormalizationStats& stats);

/// Where the min-max range comes from: the sensor's undamaged training frames,
/// or each frame on its own.
enum class NormalizationScope { Sensor, Frame };
const char* to_string(NormalizationScope scope);
NormalizationScope normalization_scope_from_string(const std::string& name);

/// Per-frame min-max. A constant frame maps to 0.5 everywhere.
Frame normalize_frame(const Frame& frame);
std::vector<Frame> normalize_frames(std::span<const Frame> frames);

/// Seeded shuffle, then the first ceil(fraction*N) shuffled indices become the test set.
IndexSplit holdout_indices(std::size_t n, double fraction, std::uint64_t seed);

/// k (train, validation) index pairs. Validation folds partition [0, n) and
/// their sizes differ by at most one.
std::vector<IndexSplit> kfold_indices(std::size_t n, int k, std::uint64_t seed);

template <typename T>
std::vector<T> select(std::span<const T> items, std::span<const std::size_t> indices) {
    std::vector<T> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) out.push_back(items[i]);
    return out;
}

struct FrameSplit {
    std::vector<Frame> train;
    std::vector<Frame> test;
};

FrameSplit holdout_split(std::span<const Frame> frames, double fraction, std::uint64_t seed);
std::vector<FrameSplit> kfold(std::span<const Frame> frames, int k, std::uint64_t seed);

/// Debug dump: one line per frame, "sensor_id,case_id,v1,...,vs".
void write_frames_text(std::ostream& out, std::span<const Frame> frames);

}  // namespace shm
