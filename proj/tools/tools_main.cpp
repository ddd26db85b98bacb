// shm: synthetic data generation, training, scoring and frequency analysis.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "shm/error.hpp"
#include "shm/io.hpp"

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

struct Flags {
    std::string config;
    std::string data;
    std::string bundle;
    std::string out;
    std::optional<std::uint64_t> seed;
    bool fast = false;
    std::optional<int> trials;
    std::optional<std::string> strategy;
    bool ae_baseline = false;
};

void need(const std::string& value, const char* flag, const char* verb) {
    if (value.empty()) throw shm::UsageError(std::string(verb) + " requires " + flag);
}

shm::io::RunConfig resolve_config(const Flags& f) {
    shm::io::RunConfig cfg = f.config.empty() ? shm::io::RunConfig{} : shm::io::load_config(f.config);
    if (f.seed) cfg.seed = *f.seed;
    if (f.trials) {
        cfg.vae_trials = *f.trials;
        cfg.ocsvm_trials = *f.trials;
        cfg.search = true;
    }
    if (f.strategy) cfg.strategy = shm::selection::strategy_from_string(*f.strategy);
    if (f.fast) cfg.search = false;
    if (f.ae_baseline) cfg.mode = shm::vae::Mode::Deterministic;
    cfg.validate();
    return cfg;
}

void progress(const std::string& msg) { std::cerr << "[shm] " << msg << '\n'; }

int run(const std::string& verb, const Flags& f) {
    namespace fs = std::filesystem;
    if (verb == "generate") {
        need(f.out, "--out", "generate");
        shm::io::cmd_generate(resolve_config(f), f.out, progress);
    } else if (verb == "train") {
        need(f.data, "--data", "train");
        need(f.bundle, "--bundle", "train");
        const auto cfg = resolve_config(f);
        std::optional<fs::path> history;
        if (!f.out.empty()) history = fs::path(f.out);
        else history = fs::path(f.bundle).parent_path().empty() ? fs::path(".") : fs::path(f.bundle).parent_path();
        shm::io::cmd_train(cfg, f.data, f.bundle, history, progress);
    } else if (verb == "score") {
        need(f.bundle, "--bundle", "score");
        need(f.data, "--data", "score");
        need(f.out, "--out", "score");
        shm::io::cmd_score(f.bundle, f.data, f.out);
    } else if (verb == "fdd") {
        need(f.data, "--data", "fdd");
        need(f.out, "--out", "fdd");
        shm::io::cmd_fdd(resolve_config(f), f.data, f.out);
    } else if (verb == "report") {
        need(f.out, "--out", "report");
        shm::io::cmd_report(f.out);
        std::ifstream in(fs::path(f.out) / "report.txt");
        std::cout << in.rdbuf();
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Vibration-based damage detection with autoencoder features and a one-class SVM"};
    app.require_subcommand(1, 1);
    Flags f;
    auto add_common = [&f](CLI::App* cmd) {
        cmd->add_option("--config", f.config, "Flat key = value run configuration")->check(CLI::ExistingFile);
        cmd->add_option("--seed", f.seed, "Overrides the configured seed");
    };

    auto* generate = app.add_subcommand("generate", "Simulate the synthetic damage ladder");
    add_common(generate);
    generate->add_option("--out", f.out, "Output dataset directory");

    auto* train = app.add_subcommand("train", "Fit per-sensor models on the undamaged case");
    add_common(train);
    train->add_option("--data", f.data, "Dataset directory");
    train->add_option("--bundle", f.bundle, "Model bundle to write");
    train->add_option("--out", f.out, "Directory for search histories (default: next to the bundle)");
    train->add_flag("--fast", f.fast, "Fixed configuration, no search");
    train->add_option("--trials", f.trials, "Search budget per stage (enables search)")->check(CLI::PositiveNumber);
    train->add_option("--strategy", f.strategy, "Search strategy")->check(CLI::IsMember({"random", "surrogate"}));
    train->add_flag("--ae-baseline", f.ae_baseline, "Deterministic autoencoder instead of the variational one");

    auto* score = app.add_subcommand("score", "Probability of detection and KL tables");
    score->add_option("--bundle", f.bundle, "Model bundle");
    score->add_option("--data", f.data, "Dataset directory");
    score->add_option("--out", f.out, "Report directory");

    auto* fdd = app.add_subcommand("fdd", "Frequency domain decomposition of every case");
    add_common(fdd);
    fdd->add_option("--data", f.data, "Dataset directory");
    fdd->add_option("--out", f.out, "Report directory");

    auto* report = app.add_subcommand("report", "Collect the tables of a report directory");
    report->add_option("--out", f.out, "Report directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    const std::string verb = app.get_subcommands().front()->get_name();
    try {
        return run(verb, f);
    } catch (const shm::UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kUsage;
    } catch (const shm::DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const shm::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kNumerical;
    }
}
