#include "shm/io.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <future>
#include <mutex>
#include <regex>
#include <sstream>

#include "shm/error.hpp"
#include "shm/random.hpp"

namespace shm::io {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& key, const std::string& text) {
    const char* begin = text.c_str();
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(begin, &end);
    if (text.empty() || end != begin + text.size() || std::isnan(v)) {
        throw UsageError("config key '" + key + "': '" + text + "' is not a number");
    }
    // an explicit "inf" is fine, a literal too large for a double is not
    if (errno == ERANGE && std::isinf(v)) throw UsageError("config key '" + key + "': '" + text + "' is out of range");
    return v;
}

long long parse_integer(const std::string& key, const std::string& text) {
    long long v = 0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size()) {
        throw UsageError("config key '" + key + "': '" + text + "' is not an integer");
    }
    return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
    if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
    if (text == "false" || text == "0" || text == "no" || text == "off") return false;
    throw UsageError("config key '" + key + "': '" + text + "' is not a boolean");
}

std::string_view kl_method_name(scoring::KlMethod m) {
    return m == scoring::KlMethod::LatentGaussian ? "latent_gaussian" : "posterior_prior";
}

scoring::KlMethod kl_method_from(const std::string& text) {
    if (text == "latent_gaussian") return scoring::KlMethod::LatentGaussian;
    if (text == "posterior_prior") return scoring::KlMethod::PosteriorPrior;
    throw UsageError("unknown kl_method '" + text + "'");
}

struct Field {
    const char* key;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

template <typename T>
Field integer_field(const char* key, T RunConfig::*member) {
    return {key, [member](const RunConfig& c) { return std::to_string(c.*member); },
            [key, member](RunConfig& c, const std::string& v) {
                const long long x = parse_integer(key, v);
                if (x < 0 && std::is_unsigned_v<T>) throw UsageError(std::string("config key '") + key + "' must be non-negative");
                c.*member = static_cast<T>(x);
            }};
}

Field real_field(const char* key, double RunConfig::*member) {
    return {key, [member](const RunConfig& c) { return format_double(c.*member); },
            [key, member](RunConfig& c, const std::string& v) { c.*member = parse_double(key, v); }};
}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = {
        integer_field("frame_length", &RunConfig::frame_length),
        {"seed", [](const RunConfig& c) { return std::to_string(c.seed); },
         [](RunConfig& c, const std::string& v) {
             std::uint64_t x = 0;
             const auto res = std::from_chars(v.data(), v.data() + v.size(), x);
             if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size()) {
                 throw UsageError("config key 'seed': '" + v + "' is not an unsigned integer");
             }
             c.seed = x;
         }},
        integer_field("folds", &RunConfig::folds),
        real_field("holdout_fraction", &RunConfig::holdout_fraction),
        {"normalization", [](const RunConfig& c) { return std::string(to_string(c.normalization)); },
         [](RunConfig& c, const std::string& v) { c.normalization = normalization_scope_from_string(v); }},
        {"search", [](const RunConfig& c) { return std::string(c.search ? "true" : "false"); },
         [](RunConfig& c, const std::string& v) { c.search = parse_bool("search", v); }},
        integer_field("vae_trials", &RunConfig::vae_trials),
        integer_field("ocsvm_trials", &RunConfig::ocsvm_trials),
        {"strategy", [](const RunConfig& c) { return std::string(selection::to_string(c.strategy)); },
         [](RunConfig& c, const std::string& v) { c.strategy = selection::strategy_from_string(v); }},
        {"mode", [](const RunConfig& c) { return std::string(vae::to_string(c.mode)); },
         [](RunConfig& c, const std::string& v) { c.mode = vae::mode_from_string(v); }},
        integer_field("hidden_layers", &RunConfig::hidden_layers),
        integer_field("neurons", &RunConfig::neurons),
        {"activation", [](const RunConfig& c) { return std::string(nn::to_string(c.activation)); },
         [](RunConfig& c, const std::string& v) { c.activation = nn::activation_from_string(v); }},
        integer_field("latent_dim", &RunConfig::latent_dim),
        {"optimizer", [](const RunConfig& c) { return std::string(nn::to_string(c.optimizer)); },
         [](RunConfig& c, const std::string& v) { c.optimizer = nn::optimizer_from_string(v); }},
        real_field("learning_rate", &RunConfig::learning_rate),
        integer_field("max_epochs", &RunConfig::max_epochs),
        integer_field("patience", &RunConfig::patience),
        integer_field("batch_size", &RunConfig::batch_size),
        real_field("beta", &RunConfig::beta),
        real_field("validation_fraction", &RunConfig::validation_fraction),
        real_field("nu", &RunConfig::nu),
        {"kernel", [](const RunConfig& c) { return std::string(ocsvm::to_string(c.kernel)); },
         [](RunConfig& c, const std::string& v) { c.kernel = ocsvm::kernel_from_string(v); }},
        real_field("gamma", &RunConfig::gamma),
        integer_field("order", &RunConfig::order),
        integer_field("crossfit_folds", &RunConfig::crossfit_folds),
        {"kl_method", [](const RunConfig& c) { return std::string(kl_method_name(c.kl_method)); },
         [](RunConfig& c, const std::string& v) { c.kl_method = kl_method_from(v); }},
        real_field("sampling_rate_hz", &RunConfig::sampling_rate_hz),
        real_field("band_low_hz", &RunConfig::band_low_hz),
        real_field("band_high_hz", &RunConfig::band_high_hz),
        real_field("excitation_amplitude", &RunConfig::excitation_amplitude),
        integer_field("force_story", &RunConfig::force_story),
        real_field("snr_db", &RunConfig::snr_db),
        integer_field("substeps", &RunConfig::substeps),
        real_field("duration_scale", &RunConfig::duration_scale),
        {"cases",
         [](const RunConfig& c) {
             std::string s;
             for (std::size_t i = 0; i < c.cases.size(); ++i) s += (i ? "," : "") + std::to_string(c.cases[i]);
             return s;
         },
         [](RunConfig& c, const std::string& v) {
             c.cases.clear();
             std::stringstream ss(v);
             std::string item;
             while (std::getline(ss, item, ',')) {
                 item = trim(item);
                 if (!item.empty()) c.cases.push_back(static_cast<int>(parse_integer("cases", item)));
             }
         }},
        integer_field("nfft", &RunConfig::nfft),
        real_field("overlap", &RunConfig::overlap),
        real_field("peak_low_hz", &RunConfig::peak_low_hz),
        real_field("peak_high_hz", &RunConfig::peak_high_hz),
        real_field("prominence_db", &RunConfig::prominence_db),
        real_field("median_half_width_hz", &RunConfig::median_half_width_hz),
        real_field("min_separation_hz", &RunConfig::min_separation_hz),
        real_field("dynamic_range_db", &RunConfig::dynamic_range_db),
        real_field("max_relative_shift", &RunConfig::max_relative_shift),
        integer_field("fdd_modes", &RunConfig::fdd_modes),
    };
    return table;
}

void require(bool ok, const std::string& message) {
    if (!ok) throw UsageError("config: " + message);
}

}  // namespace

void RunConfig::validate() const {
    require(frame_length >= 2, "frame_length must be at least 2");
    require(folds >= 2, "folds must be at least 2");
    require(holdout_fraction > 0.0 && holdout_fraction < 1.0, "holdout_fraction must lie in (0, 1)");
    require(vae_trials >= 1 && ocsvm_trials >= 1, "trial budgets must be positive");
    architecture().validate();
    train_config().validate();
    require(nu > 0.0 && nu <= 1.0, "nu must lie in (0, 1]");
    require(gamma >= 0.0 && std::isfinite(gamma), "gamma must be non-negative");
    require(order >= 2 && order <= 4, "order must lie in [2, 4]");
    require(crossfit_folds >= 0, "crossfit_folds must be non-negative");
    require(sampling_rate_hz > 0.0, "sampling_rate_hz must be positive");
    require(band_low_hz >= 0.0 && band_low_hz < band_high_hz && band_high_hz <= sampling_rate_hz / 2.0,
            "excitation band must satisfy 0 <= low < high <= fs/2");
    require(excitation_amplitude > 0.0, "excitation_amplitude must be positive");
    require(force_story >= 1, "force_story must be at least 1");
    require(!std::isnan(snr_db), "snr_db must be a number");
    require(substeps >= 1, "substeps must be at least 1");
    require(duration_scale > 0.0 && std::isfinite(duration_scale), "duration_scale must be positive");
    require(nfft >= 8, "nfft must be at least 8");
    require(overlap >= 0.0 && overlap < 1.0, "overlap must lie in [0, 1)");
    require(peak_low_hz >= 0.0 && peak_low_hz < peak_high_hz, "peak band must satisfy 0 <= low < high");
    require(prominence_db >= 0.0 && median_half_width_hz > 0.0 && min_separation_hz >= 0.0,
            "peak thresholds must be non-negative");
    require(dynamic_range_db > 0.0, "dynamic_range_db must be positive");
    require(max_relative_shift > 0.0, "max_relative_shift must be positive");
    require(fdd_modes >= 1, "fdd_modes must be at least 1");
}

vae::Architecture RunConfig::architecture() const { return {hidden_layers, neurons, activation, latent_dim}; }

vae::TrainConfig RunConfig::train_config() const {
    vae::TrainConfig t;
    t.max_epochs = max_epochs;
    t.patience = patience;
    t.validation_fraction = validation_fraction;
    t.learning_rate = learning_rate;
    t.optimizer = optimizer;
    t.seed = seed;
    t.batch_size = batch_size;
    t.beta = beta;
    return t;
}

fdd::WelchOptions RunConfig::welch() const { return {nfft, overlap}; }

fdd::PeakOptions RunConfig::peaks() const {
    return {peak_low_hz, peak_high_hz, prominence_db, median_half_width_hz, min_separation_hz, dynamic_range_db};
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& f : fields()) out.emplace_back(f.key, f.get(*this));
    return out;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    for (const auto& f : fields()) {
        if (key == f.key) {
            f.set(*this, value);
            return;
        }
    }
    throw UsageError("unknown config key '" + key + "'");
}

RunConfig parse_config(std::istream& in, const std::string& source_name) {
    RunConfig config;
    std::string line;
    int line_no = 0;
    std::vector<std::string> seen;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const std::string content = trim(line);
        if (content.empty()) continue;
        const auto eq = content.find('=');
        const std::string where = source_name + ":" + std::to_string(line_no) + ": ";
        if (eq == std::string::npos) throw UsageError(where + "expected 'key = value'");
        const std::string key = trim(std::string_view(content).substr(0, eq));
        const std::string value = trim(std::string_view(content).substr(eq + 1));
        if (std::find(seen.begin(), seen.end(), key) != seen.end()) throw UsageError(where + "duplicate key '" + key + "'");
        seen.push_back(key);
        try {
            config.set(key, value);
        } catch (const Error& e) {
            throw UsageError(where + e.what());
        }
    }
    config.validate();
    return config;
}

RunConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config file " + path.string());
    return parse_config(in, path.string());
}

void write_config(std::ostream& out, const RunConfig& config) {
    for (const auto& [k, v] : config.entries()) out << k << " = " << v << '\n';
}

// ---------------------------------------------------------------- datasets

const std::vector<SensorRecord>& Dataset::records(int case_id) const {
    const auto it = cases.find(case_id);
    if (it == cases.end()) throw DataError("dataset has no case " + std::to_string(case_id));
    return it->second;
}

Dataset load_dataset(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw DataError("data directory " + dir.string() + " does not exist");
    Dataset data;
    const fs::path manifest = dir / "manifest.json";
    if (fs::exists(manifest)) {
        std::ifstream in(manifest);
        try {
            const json j = json::parse(in);
            data.sampling_rate_hz = j.at("sampling_rate_hz").get<double>();
        } catch (const json::exception& e) {
            throw DataError("malformed manifest " + manifest.string() + ": " + e.what());
        }
    }
    const std::regex pattern(R"(case_(\d+)\.csv)");
    for (const auto& entry : fs::directory_iterator(dir)) {
        std::smatch m;
        const std::string name = entry.path().filename().string();
        if (!std::regex_match(name, m, pattern)) continue;
        data.cases[std::stoi(m[1].str())] = load_csv(entry.path(), data.sampling_rate_hz);
    }
    if (data.cases.empty()) throw DataError("no case_<id>.csv files in " + dir.string());
    return data;
}

// ---------------------------------------------------------------- bundle

namespace {

json network_to_json(const nn::DenseNetwork& net) {
    json layers = json::array();
    for (const auto& layer : net.layers()) {
        json l;
        l["activation"] = nn::to_string(layer.activation);
        l["rows"] = layer.weights.rows();
        l["cols"] = layer.weights.cols();
        l["weights"] = std::vector<double>(layer.weights.data(), layer.weights.data() + layer.weights.size());
        l["bias"] = std::vector<double>(layer.bias.data(), layer.bias.data() + layer.bias.size());
        layers.push_back(std::move(l));
    }
    return layers;
}

nn::DenseNetwork network_from_json(const json& j) {
    std::vector<nn::DenseLayer> layers;
    for (const auto& l : j) {
        nn::DenseLayer layer;
        layer.activation = nn::activation_from_string(l.at("activation").get<std::string>());
        const auto rows = l.at("rows").get<Eigen::Index>();
        const auto cols = l.at("cols").get<Eigen::Index>();
        const auto w = l.at("weights").get<std::vector<double>>();
        const auto b = l.at("bias").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(w.size()) != rows * cols || static_cast<Eigen::Index>(b.size()) != rows) {
            throw DataError("bundle: layer payload does not match its shape");
        }
        layer.weights = Eigen::Map<const Eigen::MatrixXd>(w.data(), rows, cols);
        layer.bias = Eigen::Map<const Eigen::VectorXd>(b.data(), rows);
        layers.push_back(std::move(layer));
    }
    return nn::DenseNetwork(std::move(layers));
}

json kernel_to_json(const ocsvm::KernelSpec& k) {
    return {{"kind", ocsvm::to_string(k.kind)}, {"gamma", k.gamma}, {"order", k.order}, {"coef0", k.coef0}, {"scale", k.scale}};
}

ocsvm::KernelSpec kernel_from_json(const json& j) {
    ocsvm::KernelSpec k;
    k.kind = ocsvm::kernel_from_string(j.at("kind").get<std::string>());
    k.gamma = j.at("gamma").get<double>();
    k.order = j.at("order").get<int>();
    k.coef0 = j.at("coef0").get<double>();
    k.scale = j.at("scale").get<double>();
    return k;
}

json sensor_to_json(const SensorModel& s) {
    json j;
    j["sensor"] = s.sensor;
    j["normalization"] = {{"min", s.vae.normalization.min}, {"max", s.vae.normalization.max}};
    j["vae"] = {{"mode", vae::to_string(s.vae.mode)},
                {"latent_dim", s.vae.latent_dim},
                {"encoder", network_to_json(s.vae.encoder)},
                {"decoder", network_to_json(s.vae.decoder)}};
    j["scaler"] = {{"mean", s.scaler.mean}, {"scale", s.scaler.scale}};
    j["ocsvm"] = {{"support_vectors", s.ocsvm.support_vectors},
                  {"alphas", s.ocsvm.alphas},
                  {"rho", s.ocsvm.rho},
                  {"kernel", kernel_to_json(s.ocsvm.kernel)},
                  {"nu", s.ocsvm.nu},
                  {"training_size", s.ocsvm.training_size}};
    j["undamaged_frames"] = s.undamaged_frames;
    j["holdout"] = s.holdout;
    j["vae_hyperparameters"] = s.vae_hyperparameters.to_json();
    j["ocsvm_hyperparameters"] = s.ocsvm_hyperparameters.to_json();
    return j;
}

SensorModel sensor_from_json(const json& j) {
    SensorModel s;
    s.sensor = j.at("sensor").get<int>();
    s.vae.normalization.min = j.at("normalization").at("min").get<double>();
    s.vae.normalization.max = j.at("normalization").at("max").get<double>();
    const auto& v = j.at("vae");
    s.vae.mode = vae::mode_from_string(v.at("mode").get<std::string>());
    s.vae.latent_dim = v.at("latent_dim").get<int>();
    s.vae.encoder = network_from_json(v.at("encoder"));
    s.vae.decoder = network_from_json(v.at("decoder"));
    s.scaler.mean = j.at("scaler").at("mean").get<std::array<double, 2>>();
    s.scaler.scale = j.at("scaler").at("scale").get<std::array<double, 2>>();
    const auto& o = j.at("ocsvm");
    s.ocsvm.support_vectors = o.at("support_vectors").get<std::vector<ocsvm::Point>>();
    s.ocsvm.alphas = o.at("alphas").get<std::vector<double>>();
    s.ocsvm.rho = o.at("rho").get<double>();
    s.ocsvm.kernel = kernel_from_json(o.at("kernel"));
    s.ocsvm.nu = o.at("nu").get<double>();
    s.ocsvm.training_size = o.at("training_size").get<std::size_t>();
    if (s.ocsvm.alphas.size() != s.ocsvm.support_vectors.size()) throw DataError("bundle: alpha/support vector count mismatch");
    s.undamaged_frames = j.at("undamaged_frames").get<std::size_t>();
    s.holdout = j.at("holdout").get<std::vector<std::size_t>>();
    s.vae_hyperparameters = selection::Configuration::from_json(j.at("vae_hyperparameters"));
    s.ocsvm_hyperparameters = selection::Configuration::from_json(j.at("ocsvm_hyperparameters"));
    return s;
}

}  // namespace

const SensorModel& ModelBundle::sensor(int id) const {
    for (const auto& s : sensors) {
        if (s.sensor == id) return s;
    }
    throw DataError("bundle has no model for sensor " + std::to_string(id));
}

json to_json(const ModelBundle& bundle) {
    json j;
    j["format"] = kBundleFormat;
    j["version"] = bundle.version;
    json cfg = json::object();
    for (const auto& [k, v] : bundle.config.entries()) cfg[k] = v;
    j["config"] = std::move(cfg);
    j["sensors"] = json::array();
    for (const auto& s : bundle.sensors) j["sensors"].push_back(sensor_to_json(s));
    return j;
}

ModelBundle bundle_from_json(const json& j) {
    if (!j.is_object() || !j.contains("format") || j.at("format") != kBundleFormat) {
        throw DataError("not a model bundle (missing or foreign format tag)");
    }
    const int version = j.at("version").get<int>();
    if (version != kBundleVersion) {
        throw DataError("unsupported bundle version " + std::to_string(version) + " (this build reads version " +
                        std::to_string(kBundleVersion) + ")");
    }
    ModelBundle bundle;
    bundle.version = version;
    try {
        for (const auto& [k, v] : j.at("config").items()) bundle.config.set(k, v.get<std::string>());
        for (const auto& s : j.at("sensors")) bundle.sensors.push_back(sensor_from_json(s));
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed bundle: ") + e.what());
    } catch (const UsageError& e) {
        throw DataError(std::string("malformed bundle: ") + e.what());
    }
    return bundle;
}

void save_bundle(const fs::path& path, const ModelBundle& bundle) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw DataError("cannot write bundle " + path.string());
    out << to_json(bundle).dump(1) << '\n';
    if (!out) throw DataError("failed writing bundle " + path.string());
}

ModelBundle load_bundle(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open bundle " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw DataError("bundle " + path.string() + " is not valid JSON: " + e.what());
    }
    return bundle_from_json(j);
}

// ---------------------------------------------------------------- generate

namespace {

std::ofstream open_output(const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out.precision(17);
    return out;
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw DataError("cannot create directory " + dir.string());
}

}  // namespace

void cmd_generate(const RunConfig& config, const fs::path& out_dir, const Progress& progress) {
    config.validate();
    ensure_dir(out_dir);
    const auto model = synth::default_frame();
    if (static_cast<std::size_t>(config.force_story) > model.story_count()) {
        throw UsageError("force_story " + std::to_string(config.force_story) + " exceeds the story count");
    }
    json manifest;
    manifest["format"] = "shm-dataset";
    manifest["sampling_rate_hz"] = config.sampling_rate_hz;
    manifest["seed"] = config.seed;
    manifest["story_masses"] = model.story_masses;
    manifest["story_stiffnesses"] = model.story_stiffnesses;
    manifest["cases"] = json::array();
    for (const auto& entry : synth::default_ladder()) {
        const int id = entry.scenario.scenario_id;
        if (!config.cases.empty() && std::find(config.cases.begin(), config.cases.end(), id) == config.cases.end()) continue;
        synth::ExcitationSpec spec;
        spec.duration_s = entry.duration_s * config.duration_scale;
        spec.sampling_rate_hz = config.sampling_rate_hz;
        spec.band_low_hz = config.band_low_hz;
        spec.band_high_hz = config.band_high_hz;
        spec.amplitude = config.excitation_amplitude;
        spec.seed = mix_seed(config.seed, 100 + static_cast<std::uint64_t>(id));
        synth::SimulationOptions options;
        options.substeps = config.substeps;
        options.measurement_snr_db = config.snr_db;
        options.noise_seed = mix_seed(config.seed, 200 + static_cast<std::uint64_t>(id));
        if (progress) progress("generating case " + std::to_string(id));
        const auto records = synth::simulate(model, entry.scenario, spec, config.force_story, options);
        const std::string file = "case_" + std::to_string(id) + ".csv";
        save_csv(out_dir / file, records);

        std::vector<double> freqs;
        for (const auto& m : synth::analytic_modes(model, entry.scenario)) freqs.push_back(m.frequency_hz);
        manifest["cases"].push_back({{"case", id},
                                     {"file", file},
                                     {"duration_s", spec.duration_s},
                                     {"samples", spec.sample_count()},
                                     {"stiffness_multipliers", entry.scenario.stiffness_multipliers},
                                     {"severity", entry.scenario.severity()},
                                     {"frequencies_hz", freqs}});
    }
    auto out = open_output(out_dir / "manifest.json");
    out << manifest.dump(2) << '\n';
}

// ---------------------------------------------------------------- train

namespace {

// Rethrows with the sensor prefixed, keeping the error category.
template <typename F>
auto with_sensor_context(int sensor, F&& f) -> decltype(f()) {
    const std::string prefix = "sensor " + std::to_string(sensor) + ": ";
    try {
        return f();
    } catch (const UsageError& e) {
        throw UsageError(prefix + e.what());
    } catch (const DataError& e) {
        throw DataError(prefix + e.what());
    } catch (const NumericalError& e) {
        throw NumericalError(prefix + e.what());
    }
}

void write_history_file(const fs::path& path, const selection::SearchResult& result) {
    auto out = open_output(path);
    selection::write_history(out, result.history);
}

}  // namespace

SensorModel train_sensor(const RunConfig& config, const SensorRecord& undamaged,
                         const std::optional<fs::path>& history_dir, const Progress& progress) {
    config.validate();
    const int id = undamaged.sensor_id;
    const std::uint64_t base = mix_seed(config.seed, static_cast<std::uint64_t>(id));
    auto note = [&](const std::string& msg) {
        if (progress) progress("sensor " + std::to_string(id) + ": " + msg);
    };

    const auto frames = window(undamaged, config.frame_length, kUndamagedCase);
    if (frames.size() < 10) {
        throw DataError("only " + std::to_string(frames.size()) + " undamaged frames of length " +
                        std::to_string(config.frame_length));
    }
    const auto split = holdout_indices(frames.size(), config.holdout_fraction, mix_seed(base, 10));
    const auto train_raw = select<Frame>(frames, split.train);
    const auto stats = fit_normalization(train_raw);
    const auto train_frames = config.normalization == NormalizationScope::Sensor
                                  ? apply_normalization(train_raw, stats)
                                  : normalize_frames(train_raw);

    SensorModel out;
    out.sensor = id;
    out.undamaged_frames = frames.size();
    out.holdout = split.test;

    vae::TrainConfig tc = config.train_config();
    tc.seed = mix_seed(base, 11);
    selection::VaeHyperparameters vhp{config.architecture(), config.optimizer, config.learning_rate};
    if (config.search) {
        note("autoencoder search, " + std::to_string(config.vae_trials) + " trials");
        selection::SearchOptions so;
        so.trials = config.vae_trials;
        so.strategy = config.strategy;
        so.direction = selection::Direction::Minimize;
        so.seed = mix_seed(base, 12);
        const auto objective = [&](const selection::Configuration& c, std::uint64_t seed) {
            return selection::cv_objective_vae(selection::VaeHyperparameters::from(c), train_frames, config.folds, seed,
                                               tc, config.mode);
        };
        const auto result = selection::search(selection::SearchSpace::vae(), objective, so);
        if (history_dir) write_history_file(*history_dir / ("history_sensor" + std::to_string(id) + "_vae.jsonl"), result);
        vhp = selection::VaeHyperparameters::from(result.best.config);
    }
    tc.optimizer = vhp.optimizer;
    tc.learning_rate = vhp.learning_rate;
    note("training autoencoder");
    auto trained = vae::train(train_frames, vhp.architecture, config.mode, tc);
    out.vae = std::move(trained.model);
    out.vae.normalization = stats;
    out.vae_hyperparameters = vhp.to_configuration();

    std::vector<features::FeatureVector> raw_features;
    if (config.crossfit_folds >= 2) {
        note("out-of-fold features, " + std::to_string(config.crossfit_folds) + " folds");
        const auto folds = kfold_indices(train_frames.size(), config.crossfit_folds, mix_seed(base, 14));
        for (std::size_t k = 0; k < folds.size(); ++k) {
            vae::TrainConfig fold_tc = tc;
            fold_tc.seed = mix_seed(mix_seed(base, 15), k);
            const auto fold = vae::train(select<Frame>(train_frames, folds[k].train), vhp.architecture, config.mode,
                                         fold_tc);
            const auto f = features::extract_raw(select<Frame>(train_frames, folds[k].test), fold.model);
            raw_features.insert(raw_features.end(), f.begin(), f.end());
        }
    } else {
        raw_features = features::extract_raw(train_frames, out.vae);
    }
    out.scaler = features::FeatureScaler::fit(raw_features);
    const auto points = features::as_points(out.scaler.apply(raw_features));

    selection::OcSvmHyperparameters ohp{config.nu, config.kernel, config.order};
    if (config.search) {
        note("one-class SVM search, " + std::to_string(config.ocsvm_trials) + " trials");
        selection::SearchOptions so;
        so.trials = config.ocsvm_trials;
        so.strategy = config.strategy;
        so.direction = selection::Direction::Maximize;
        so.seed = mix_seed(base, 13);
        const auto objective = [&](const selection::Configuration& c, std::uint64_t seed) {
            return selection::cv_objective_ocsvm(selection::OcSvmHyperparameters::from(c), points, config.folds, seed);
        };
        const auto result = selection::search(selection::SearchSpace::ocsvm(), objective, so);
        if (history_dir) {
            write_history_file(*history_dir / ("history_sensor" + std::to_string(id) + "_ocsvm.jsonl"), result);
        }
        ohp = selection::OcSvmHyperparameters::from(result.best.config);
    }
    auto kernel = ohp.kernel_for(points);
    if (!config.search && ohp.kernel == ocsvm::KernelKind::RBF && config.gamma > 0.0) kernel.gamma = config.gamma;
    note("fitting one-class SVM");
    out.ocsvm = ocsvm::fit(points, ohp.nu, kernel);
    out.ocsvm_hyperparameters = ohp.to_configuration();
    return out;
}

ModelBundle train(const RunConfig& config, const Dataset& data, const std::optional<fs::path>& history_dir,
                  const Progress& progress) {
    config.validate();
    const auto& records = data.records(kUndamagedCase);
    if (history_dir && config.search) ensure_dir(*history_dir);

    std::mutex progress_mutex;
    const Progress locked = [&](const std::string& msg) {
        if (!progress) return;
        std::lock_guard lock(progress_mutex);
        progress(msg);
    };
    std::vector<std::future<SensorModel>> jobs;
    for (const auto& record : records) {
        jobs.push_back(std::async(std::launch::async, [&, rec = &record] {
            return with_sensor_context(rec->sensor_id, [&] { return train_sensor(config, *rec, history_dir, locked); });
        }));
    }
    ModelBundle bundle;
    bundle.config = config;
    // Collect every job before rethrowing so no thread outlives the locals.
    std::exception_ptr first_error;
    for (auto& job : jobs) {
        try {
            bundle.sensors.push_back(job.get());
        } catch (...) {
            if (!first_error) first_error = std::current_exception();
        }
    }
    if (first_error) std::rethrow_exception(first_error);
    return bundle;
}

void cmd_train(const RunConfig& config, const fs::path& data_dir, const fs::path& bundle_path,
               const std::optional<fs::path>& history_dir, const Progress& progress) {
    const auto data = load_dataset(data_dir);
    save_bundle(bundle_path, train(config, data, history_dir, progress));
}

// ---------------------------------------------------------------- score

namespace {

struct ScoringInput {
    std::vector<scoring::SensorPipeline> pipelines;
    std::vector<scoring::CaseFrames> scored;
    std::vector<scoring::CaseFrames> reference;
};

ScoringInput scoring_input(const ModelBundle& bundle, const Dataset& data) {
    ScoringInput in;
    for (const auto& s : bundle.sensors) in.pipelines.push_back({s.sensor, s.vae, s.scaler, s.ocsvm});
    const std::size_t frame_length = bundle.config.frame_length;
    for (const auto& [case_id, records] : data.cases) {
        if (records.size() != bundle.sensors.size()) {
            throw DataError("case " + std::to_string(case_id) + " has " + std::to_string(records.size()) +
                            " sensors, the bundle has " + std::to_string(bundle.sensors.size()));
        }
        for (const auto& record : records) {
            const auto& model = bundle.sensor(record.sensor_id);
            if (model.vae.frame_length() != static_cast<int>(frame_length)) {
                throw DataError("sensor " + std::to_string(model.sensor) + ": bundle frame length mismatch");
            }
            const auto raw = window(record, frame_length, case_id);
            auto frames = bundle.config.normalization == NormalizationScope::Sensor
                              ? apply_normalization(raw, model.vae.normalization)
                              : normalize_frames(raw);
            if (case_id == kUndamagedCase) {
                if (frames.size() != model.undamaged_frames) {
                    throw DataError("sensor " + std::to_string(model.sensor) + ": undamaged record has " +
                                    std::to_string(frames.size()) + " frames, the bundle was trained on " +
                                    std::to_string(model.undamaged_frames));
                }
                in.scored.push_back({model.sensor, case_id, select<Frame>(frames, model.holdout)});
                in.reference.push_back({model.sensor, case_id, std::move(frames)});
            } else {
                in.scored.push_back({model.sensor, case_id, std::move(frames)});
            }
        }
    }
    return in;
}

}  // namespace

scoring::ScoreResult score(const ModelBundle& bundle, const Dataset& data) {
    const auto in = scoring_input(bundle, data);
    return scoring::build_report(in.pipelines, in.scored, in.reference, bundle.config.kl_method);
}

void cmd_score(const fs::path& bundle_path, const fs::path& data_dir, const fs::path& out_dir) {
    const auto bundle = load_bundle(bundle_path);
    const auto data = load_dataset(data_dir);
    const auto in = scoring_input(bundle, data);
    const auto result = scoring::build_report(in.pipelines, in.scored, in.reference, bundle.config.kl_method);
    ensure_dir(out_dir);
    {
        auto out = open_output(out_dir / "pod.txt");
        scoring::write_pod_text(out, result.pod);
    }
    {
        auto out = open_output(out_dir / "pod.csv");
        scoring::write_pod_csv(out, result.pod);
    }
    {
        auto out = open_output(out_dir / "kl.txt");
        scoring::write_kl_text(out, result.kl);
    }
    {
        auto out = open_output(out_dir / "kl.csv");
        scoring::write_kl_csv(out, result.kl);
    }
    auto out = open_output(out_dir / "features.csv");
    std::vector<features::FeatureVector> all;
    for (const auto& cf : in.scored) {
        const auto& p = bundle.sensor(cf.sensor);
        const auto f = features::extract(cf.frames, p.vae, p.scaler);
        all.insert(all.end(), f.begin(), f.end());
    }
    features::write_csv(out, all);
}

// ---------------------------------------------------------------- fdd

fdd::FrequencyTable frequency_table(const RunConfig& config, const Dataset& data,
                                    std::map<int, fdd::ModalEstimate>* estimates) {
    config.validate();
    const auto welch = config.welch();
    const auto peaks = config.peaks();
    std::map<int, fdd::ModalEstimate> found;
    for (const auto& [case_id, records] : data.cases) {
        for (const auto& r : records) {
            if (r.samples.size() < config.nfft) {
                throw DataError("case " + std::to_string(case_id) + ", sensor " + std::to_string(r.sensor_id) + ": " +
                                std::to_string(r.samples.size()) + " samples is shorter than nfft " +
                                std::to_string(config.nfft));
            }
        }
        found[case_id] = fdd::identify(records, welch, peaks);
    }
    const auto ref = found.find(kUndamagedCase);
    if (ref == found.end()) throw DataError("frequency table needs the undamaged case");

    fdd::FrequencyTable table;
    table.mode_count = config.fdd_modes;
    std::vector<double> reference = ref->second.frequencies;
    if (reference.size() > config.fdd_modes) reference.resize(config.fdd_modes);
    for (const auto& [case_id, est] : found) {
        table.cases[case_id] = fdd::frequency_shift_table(reference, est.frequencies, config.max_relative_shift);
    }
    if (estimates) *estimates = std::move(found);
    return table;
}

void cmd_fdd(const RunConfig& config, const fs::path& data_dir, const fs::path& out_dir) {
    const auto data = load_dataset(data_dir);
    std::map<int, fdd::ModalEstimate> estimates;
    const auto table = frequency_table(config, data, &estimates);
    ensure_dir(out_dir);
    {
        auto out = open_output(out_dir / "frequencies.txt");
        fdd::write_frequency_text(out, table);
    }
    {
        auto out = open_output(out_dir / "frequencies.csv");
        fdd::write_frequency_csv(out, table);
    }
    for (const auto& [case_id, est] : estimates) {
        auto out = open_output(out_dir / ("spectrum_case" + std::to_string(case_id) + ".csv"));
        fdd::write_spectrum_csv(out, est);
    }
}

// ---------------------------------------------------------------- report

void cmd_report(const fs::path& dir) {
    std::ostringstream report;
    bool any = false;
    if (std::ifstream in(dir / "pod.csv"); in) {
        report << "Probability of detection (%)\n";
        scoring::write_pod_text(report, scoring::read_pod_csv(in));
        report << '\n';
        any = true;
    }
    if (std::ifstream in(dir / "kl.csv"); in) {
        report << "KL divergence from the undamaged case\n";
        scoring::write_kl_text(report, scoring::read_kl_csv(in));
        report << '\n';
        any = true;
    }
    if (std::ifstream in(dir / "frequencies.csv"); in) {
        report << "Identified frequencies, Hz (variation %)\n";
        fdd::write_frequency_text(report, fdd::read_frequency_csv(in));
        report << '\n';
        any = true;
    }
    if (!any) throw DataError("no pod.csv, kl.csv or frequencies.csv in " + dir.string());
    auto out = open_output(dir / "report.txt");
    out << report.str();
}

}  // namespace shm::io
