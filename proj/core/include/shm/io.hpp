#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "shm/fdd.hpp"
#include "shm/features.hpp"
#include "shm/model_selection.hpp"
#include "shm/ocsvm.hpp"
#include "shm/scoring.hpp"
#include "shm/signals.hpp"
#include "shm/synth.hpp"
#include "shm/vae.hpp"

namespace shm::io {

/// Every tunable of a run. Each field has a config-file key of the same name.
struct RunConfig {
    // framing and splits
    std::size_t frame_length = 128;
    std::uint64_t seed = 0;
    int folds = 10;
    double holdout_fraction = 0.2;
    NormalizationScope normalization = NormalizationScope::Frame;

    // model selection
    bool search = false;  // false: fixed configuration below
    int vae_trials = 100;
    int ocsvm_trials = 50;
    selection::Strategy strategy = selection::Strategy::Random;

    // autoencoder
    vae::Mode mode = vae::Mode::Variational;
    int hidden_layers = 1;
    int neurons = 60;
    nn::Activation activation = nn::Activation::Sigmoid;
    int latent_dim = 20;
    nn::OptimizerKind optimizer = nn::OptimizerKind::Adam;
    double learning_rate = 1e-3;
    int max_epochs = 1000;
    int patience = 50;
    int batch_size = 32;
    double beta = 0.003;
    double validation_fraction = 0.2;

    // one-class SVM
    double nu = ocsvm::kMinNu;
    ocsvm::KernelKind kernel = ocsvm::KernelKind::RBF;
    double gamma = 0.0;  // 0: 1 / (d * mean feature variance)
    int order = 3;
    // OC-SVM training features come from k out-of-fold autoencoders; < 2 uses
    // the final autoencoder on its own training frames
    int crossfit_folds = 5;

    scoring::KlMethod kl_method = scoring::KlMethod::LatentGaussian;

    // synthetic data
    double sampling_rate_hz = 200.0;
    double band_low_hz = 5.0;
    double band_high_hz = 50.0;
    double excitation_amplitude = 1.0;
    int force_story = 4;
    double snr_db = 40.0;
    int substeps = 5;
    double duration_scale = 1.0;  // multiplies every ladder duration
    std::vector<int> cases;       // ladder subset; empty = all

    // frequency domain decomposition
    std::size_t nfft = 1024;
    double overlap = 0.5;
    double peak_low_hz = 1.0;
    double peak_high_hz = 60.0;
    double prominence_db = 6.0;
    double median_half_width_hz = 2.0;
    double min_separation_hz = 0.5;
    double dynamic_range_db = 60.0;
    double max_relative_shift = std::numeric_limits<double>::infinity();
    std::size_t fdd_modes = 2;

    void validate() const;

    vae::Architecture architecture() const;
    vae::TrainConfig train_config() const;
    fdd::WelchOptions welch() const;
    fdd::PeakOptions peaks() const;

    /// key -> value text, in a stable order.
    std::vector<std::pair<std::string, std::string>> entries() const;
    void set(const std::string& key, const std::string& value);
};

/// Flat "key = value" lines; '#' starts a comment. Unknown keys and
/// malformed values throw UsageError naming the line.
RunConfig parse_config(std::istream& in, const std::string& source_name = "<config>");
RunConfig load_config(const std::filesystem::path& path);
void write_config(std::ostream& out, const RunConfig& config);

/// Scenario records keyed by case id.
struct Dataset {
    double sampling_rate_hz = 200.0;
    std::map<int, std::vector<SensorRecord>> cases;

    const std::vector<SensorRecord>& records(int case_id) const;
};

/// Reads case_<id>.csv files (and manifest.json when present).
Dataset load_dataset(const std::filesystem::path& dir);

struct SensorModel {
    int sensor = 0;
    vae::VaeModel vae;  // carries the normalization statistics
    features::FeatureScaler scaler;
    ocsvm::OcSvmModel ocsvm;
    std::size_t undamaged_frames = 0;
    std::vector<std::size_t> holdout;  // withheld undamaged frame indices
    selection::Configuration vae_hyperparameters;
    selection::Configuration ocsvm_hyperparameters;
};

inline constexpr int kBundleVersion = 1;
inline constexpr const char* kBundleFormat = "shm-model-bundle";

struct ModelBundle {
    int version = kBundleVersion;
    RunConfig config;
    std::vector<SensorModel> sensors;

    const SensorModel& sensor(int id) const;
};

nlohmann::json to_json(const ModelBundle& bundle);
ModelBundle bundle_from_json(const nlohmann::json& j);
void save_bundle(const std::filesystem::path& path, const ModelBundle& bundle);
/// Throws DataError on a foreign format tag or an unknown version.
ModelBundle load_bundle(const std::filesystem::path& path);

using Progress = std::function<void(const std::string&)>;

/// Writes case_<id>.csv per ladder scenario plus manifest.json.
void cmd_generate(const RunConfig& config, const std::filesystem::path& out_dir, const Progress& progress = {});

/// Fits one sensor's VAE, scaler and one-class SVM on its undamaged record.
/// When `history_dir` is set and search is on, trial histories land there.
SensorModel train_sensor(const RunConfig& config, const SensorRecord& undamaged,
                         const std::optional<std::filesystem::path>& history_dir = {}, const Progress& progress = {});

/// Trains every sensor of case 1 (in parallel) and returns the bundle.
ModelBundle train(const RunConfig& config, const Dataset& data,
                  const std::optional<std::filesystem::path>& history_dir = {}, const Progress& progress = {});

void cmd_train(const RunConfig& config, const std::filesystem::path& data_dir, const std::filesystem::path& bundle_path,
               const std::optional<std::filesystem::path>& history_dir = {}, const Progress& progress = {});

/// PoD matrix and KL table of every case in `data`; case 1 uses the stored holdout.
scoring::ScoreResult score(const ModelBundle& bundle, const Dataset& data);

/// Writes pod.txt, pod.csv, kl.txt, kl.csv and features.csv.
void cmd_score(const std::filesystem::path& bundle_path, const std::filesystem::path& data_dir,
               const std::filesystem::path& out_dir);

fdd::FrequencyTable frequency_table(const RunConfig& config, const Dataset& data,
                                    std::map<int, fdd::ModalEstimate>* estimates = nullptr);

/// Writes frequencies.txt, frequencies.csv and spectrum_case<id>.csv.
void cmd_fdd(const RunConfig& config, const std::filesystem::path& data_dir, const std::filesystem::path& out_dir);

/// Re-reads whichever CSV tables exist in `dir` and writes report.txt.
void cmd_report(const std::filesystem::path& dir);

}  // namespace shm::io
