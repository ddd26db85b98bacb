#include "shm/signals.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>

#include "shm/error.hpp"
#include "shm/random.hpp"

namespace shm {

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        cells.push_back(line.substr(start, comma == std::string_view::npos ? comma : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return cells;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

bool parse_double(std::string_view cell, double& value) {
    cell = trim(cell);
    if (cell.empty()) return false;
    if (cell.front() == '+') cell.remove_prefix(1);
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
    return ec == std::errc() && ptr == cell.data() + cell.size() && std::isfinite(value);
}

}  // namespace

bool NormalizationStats::valid() const {
    return std::isfinite(min) && std::isfinite(max) && max > min;
}

std::vector<SensorRecord> parse_csv(std::istream& in, double sampling_rate_hz,
                                    const std::string& source_name) {
    if (!(sampling_rate_hz > 0.0)) throw UsageError("sampling rate must be positive");
    std::string line;
    if (!std::getline(in, line)) throw DataError(source_name + ": missing header row");

    std::vector<SensorRecord> records;
    const auto header = split_commas(line);
    for (std::size_t c = 0; c < header.size(); ++c) {
        const auto cell = trim(header[c]);
        int id = 0;
        const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), id);
        if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size()) {
            throw DataError(source_name + ": header column " + std::to_string(c + 1) +
                            " is not an integer sensor id");
        }
        records.push_back(SensorRecord{id, {}, sampling_rate_hz});
    }

    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        const auto cells = split_commas(line);
        if (cells.size() != records.size()) {
            throw DataError(source_name + ": row " + std::to_string(row) + " has " +
                            std::to_string(cells.size()) + " columns, expected " +
                            std::to_string(records.size()));
        }
        for (std::size_t c = 0; c < cells.size(); ++c) {
            double v = 0.0;
            if (!parse_double(cells[c], v)) {
                throw DataError(source_name + ": row " + std::to_string(row) + ", column " +
                                std::to_string(c + 1) + ": not a finite number '" +
                                std::string(trim(cells[c])) + "'");
            }
            records[c].samples.push_back(v);
        }
    }
    if (records.empty() || records.front().samples.empty()) {
        throw DataError(source_name + ": empty body");
    }
    return records;
}

std::vector<SensorRecord> load_csv(const std::filesystem::path& path, double sampling_rate_hz) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    return parse_csv(in, sampling_rate_hz, path.string());
}

void write_csv(std::ostream& out, std::span<const SensorRecord> records) {
    if (records.empty()) throw UsageError("write_csv: no records");
    const std::size_t n = records.front().samples.size();
    for (std::size_t c = 0; c < records.size(); ++c) {
        if (records[c].samples.size() != n) throw UsageError("write_csv: records differ in length");
        out << (c ? "," : "") << records[c].sensor_id;
    }
    out << '\n' << std::setprecision(17);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < records.size(); ++c) {
            out << (c ? "," : "") << records[c].samples[i];
        }
        out << '\n';
    }
}

void save_csv(const std::filesystem::path& path, std::span<const SensorRecord> records) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    write_csv(out, records);
}

std::vector<Frame> window(const SensorRecord& record, std::size_t frame_length, int case_id) {
    if (frame_length == 0) throw UsageError("frame length must be at least 1");
    const std::size_t count = record.samples.size() / frame_length;
    std::vector<Frame> frames;
    frames.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        const auto first = record.samples.begin() + static_cast<std::ptrdiff_t>(k * frame_length);
        frames.push_back(Frame{std::vector<double>(first, first + static_cast<std::ptrdiff_t>(frame_length)),
                               record.sensor_id, case_id, k});
    }
    return frames;
}

NormalizationStats fit_normalization(std::span<const Frame> frames) {
    if (frames.empty()) throw UsageError("fit_normalization: no frames");
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& f : frames) {
        for (double v : f.values) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    if (!(hi > lo)) throw DataError("fit_normalization: degenerate range (all values equal)");
    return {lo, hi};
}

Frame apply_normalization(const Frame& frame, const NormalizationStats& stats) {
    if (!stats.valid()) throw UsageError("apply_normalization: invalid statistics");
    Frame out = frame;
    const double span = stats.max - stats.min;
    for (double& v : out.values) v = std::clamp((v - stats.min) / span, 0.0, 1.0);
    return out;
}

std::vector<Frame> apply_normalization(std::span<const Frame> frames, const NormalizationStats& stats) {
    std::vector<Frame> out;
    out.reserve(frames.size());
    for (const auto& f : frames) out.push_back(apply_normalization(f, stats));
    return out;
}

const char* to_string(NormalizationScope scope) {
    return scope == NormalizationScope::Sensor ? "sensor" : "frame";
}

NormalizationScope normalization_scope_from_string(const std::string& name) {
    if (name == "sensor") return NormalizationScope::Sensor;
    if (name == "frame") return NormalizationScope::Frame;
    throw UsageError("unknown normalization '" + name + "' (expected sensor or frame)");
}

Frame normalize_frame(const Frame& frame) {
    Frame out = frame;
    if (frame.values.empty()) return out;
    const auto [lo, hi] = std::minmax_element(frame.values.begin(), frame.values.end());
    const double min = *lo;
    const double span = *hi - *lo;
    for (double& v : out.values) v = span > 0.0 ? (v - min) / span : 0.5;
    return out;
}

std::vector<Frame> normalize_frames(std::span<const Frame> frames) {
    std::vector<Frame> out;
    out.reserve(frames.size());
    for (const auto& f : frames) out.push_back(normalize_frame(f));
    return out;
}

IndexSplit holdout_indices(std::size_t n, double fraction, std::uint64_t seed) {
    if (n == 0) throw UsageError("holdout_split: empty input");
    if (!(fraction > 0.0 && fraction < 1.0)) throw UsageError("holdout fraction must lie in (0, 1)");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(order);
    // Guard the ceiling against representation error, e.g. 0.2 * 10 = 2.0000000000000004.
    const double raw = fraction * static_cast<double>(n);
    auto test_size = static_cast<std::size_t>(std::ceil(raw - 1e-9 * std::max(1.0, raw)));
    test_size = std::min(test_size, n);
    IndexSplit split;
    split.test.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(test_size));
    split.train.assign(order.begin() + static_cast<std::ptrdiff_t>(test_size), order.end());
    return split;
}

std::vector<IndexSplit> kfold_indices(std::size_t n, int k, std::uint64_t seed) {
    if (k < 2) throw UsageError("kfold: k must be at least 2");
    if (n < static_cast<std::size_t>(k)) {
        throw UsageError("kfold: " + std::to_string(n) + " items cannot fill " + std::to_string(k) + " folds");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(order);

    const std::size_t folds = static_cast<std::size_t>(k);
    const std::size_t base = n / folds;
    const std::size_t extra = n % folds;
    std::vector<IndexSplit> out(folds);
    std::size_t start = 0;
    for (std::size_t f = 0; f < folds; ++f) {
        const std::size_t size = base + (f < extra ? 1 : 0);
        for (std::size_t i = 0; i < n; ++i) {
            (i >= start && i < start + size ? out[f].test : out[f].train).push_back(order[i]);
        }
        start += size;
    }
    return out;
}

FrameSplit holdout_split(std::span<const Frame> frames, double fraction, std::uint64_t seed) {
    const auto idx = holdout_indices(frames.size(), fraction, seed);
    return {select<Frame>(frames, idx.train), select<Frame>(frames, idx.test)};
}

std::vector<FrameSplit> kfold(std::span<const Frame> frames, int k, std::uint64_t seed) {
    std::vector<FrameSplit> out;
    for (const auto& fold : kfold_indices(frames.size(), k, seed)) {
        out.push_back({select<Frame>(frames, fold.train), select<Frame>(frames, fold.test)});
    }
    return out;
}

void write_frames_text(std::ostream& out, std::span<const Frame> frames) {
    out << std::setprecision(17);
    for (const auto& f : frames) {
        out << f.source_sensor << ',' << f.source_case;
        for (double v : f.values) out << ',' << v;
        out << '\n';
    }
}

}  // namespace shm
