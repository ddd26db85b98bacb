// End-to-end acceptance run: one PASS/FAIL line per criterion.
//   acceptance [--work DIR] [--only N[,N...]]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "qp_oracle.hpp"
#include "shm/error.hpp"
#include "shm/fdd.hpp"
#include "shm/io.hpp"
#include "shm/model_selection.hpp"
#include "shm/ocsvm.hpp"
#include "shm/random.hpp"
#include "shm/scoring.hpp"
#include "shm/signals.hpp"
#include "shm/synth.hpp"
#include "shm/vae.hpp"

using namespace shm;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void quiet(const std::string&) {}

// --- 1 ------------------------------------------------------------------

Outcome framing() {
    const auto t0 = Clock::now();
    bool ok = true;
    std::string counts;
    for (auto [n, expect] : {std::pair<std::size_t, std::size_t>{24000, 187}, {60000, 468}, {72000, 562}}) {
        SensorRecord r;
        r.samples.assign(n, 0.25);
        const auto frames = window(r, 128);
        ok = ok && frames.size() == expect;
        for (std::size_t k = 0; k < frames.size() && ok; ++k)
            ok = frames[k].values.size() == 128 && frames[k].index == k;
        counts += (counts.empty() ? "" : "/") + std::to_string(frames.size());
    }
    const double t = seconds_since(t0);
    return {ok && t < 1.0, fmt("frames %s, %.3f s", counts.c_str(), t)};
}

// --- 2 ------------------------------------------------------------------

Eigen::VectorXd vae_params(const vae::VaeModel& m) {
    Eigen::VectorXd e = m.encoder.flatten(), d = m.decoder.flatten();
    Eigen::VectorXd out(e.size() + d.size());
    out << e, d;
    return out;
}

void assign_params(vae::VaeModel& m, const Eigen::VectorXd& p) {
    const auto ne = static_cast<Eigen::Index>(m.encoder.parameter_count());
    m.encoder.assign(p.head(ne));
    m.decoder.assign(p.tail(p.size() - ne));
}

// Central differences on a random subset of coordinates plus a few random
// directions (the latter exercise every parameter at once).
Outcome gradients() {
    const auto t0 = Clock::now();
    const auto space = selection::SearchSpace::vae();
    Rng rng(mix_seed(2, 0));
    double worst = 0.0;
    std::string worst_cfg;
    const int frame = 128, batch = 4, coords = 200, directions = 4;
    const double h = 1e-5;
    for (int trial = 0; trial < 20; ++trial) {
        const auto hp = selection::VaeHyperparameters::from(space.sample(rng));
        auto m = vae::make_model(frame, hp.architecture, vae::Mode::Variational, rng.next_u64());
        Eigen::MatrixXd x(frame, batch), eps(hp.architecture.latent_dim, batch);
        for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform();
        for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = rng.normal();
        const double beta = 1.0;

        const auto lg = vae::loss_and_gradients(m, x, eps, beta);
        const Eigen::VectorXd p0 = vae_params(m);
        Eigen::VectorXd g(p0.size());
        g << nn::DenseNetwork::flatten(lg.encoder), nn::DenseNetwork::flatten(lg.decoder);

        auto loss_at = [&](const Eigen::VectorXd& p) {
            assign_params(m, p);
            return vae::batch_loss(m, x, eps, beta);
        };
        Eigen::VectorXd analytic(coords + directions), numeric(coords + directions);
        for (int c = 0; c < coords; ++c) {
            const auto k = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(p0.size())));
            Eigen::VectorXd p = p0;
            p[k] += h;
            const double up = loss_at(p);
            p[k] -= 2 * h;
            numeric[c] = (up - loss_at(p)) / (2 * h);
            analytic[c] = g[k];
        }
        for (int d = 0; d < directions; ++d) {
            Eigen::VectorXd v(p0.size());
            for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.normal();
            v.normalize();
            numeric[coords + d] = (loss_at(p0 + h * v) - loss_at(p0 - h * v)) / (2 * h);
            analytic[coords + d] = g.dot(v);
        }
        const double rel = (analytic - numeric).norm() / std::max(numeric.norm(), 1e-12);
        if (rel > worst) {
            worst = rel;
            worst_cfg = fmt("%d x %d %s, latent %d", hp.architecture.hidden_layers, hp.architecture.neurons,
                            std::string(nn::to_string(hp.architecture.activation)).c_str(),
                            hp.architecture.latent_dim);
        }
    }
    const double t = seconds_since(t0);
    return {worst < 1e-5 && t < 30.0,
            fmt("worst relative error %.2e (%s), %.1f s", worst, worst_cfg.c_str(), t)};
}

// --- 3 ------------------------------------------------------------------

Outcome kl_closed_form() {
    double worst = 0.0;
    auto check = [&](double got, double want) { worst = std::max(worst, std::abs(got - want)); };
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(1);
    const Eigen::VectorXd one = Eigen::VectorXd::Ones(1);
    const Eigen::VectorXd log2 = Eigen::VectorXd::Constant(1, std::log(2.0));
    const double third = 0.5 * (2.0 - std::log(2.0) - 1.0);
    check(vae::kl_to_standard_normal(zero, zero), 0.0);
    check(vae::kl_to_standard_normal(one, zero), 0.5);
    check(vae::kl_to_standard_normal(zero, log2), third);

    auto summary = [](double mean, double var) {
        scoring::LatentSummary s;
        s.mean = Eigen::VectorXd::Constant(1, mean);
        s.variance = Eigen::VectorXd::Constant(1, var);
        return s;
    };
    const auto prior = summary(0.0, 1.0);
    check(scoring::kl_between(prior, prior), 0.0);
    check(scoring::kl_between(summary(1.0, 1.0), prior), 0.5);
    check(scoring::kl_between(summary(0.0, 2.0), prior), third);
    return {worst < 1e-12, fmt("max deviation %.1e", worst)};
}

// --- 4 ------------------------------------------------------------------

Outcome ocsvm_oracle() {
    const auto t0 = Clock::now();
    Rng rng(mix_seed(4, 0));
    double worst_gap = 0.0, worst_kkt = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const int n = static_cast<int>(rng.integer(2, 12));
        const int d = static_cast<int>(rng.integer(1, 3));
        const double nu = rng.uniform(0.05, 1.0);
        std::vector<ocsvm::Point> pts(static_cast<std::size_t>(n), ocsvm::Point(static_cast<std::size_t>(d)));
        for (auto& p : pts)
            for (double& v : p) v = rng.normal();
        ocsvm::KernelSpec kernel;
        switch (trial % 3) {
            case 0: kernel = ocsvm::KernelSpec::rbf(ocsvm::default_gamma(pts)); break;
            case 1: kernel = ocsvm::KernelSpec::linear(); break;
            default: kernel = ocsvm::KernelSpec::polynomial(static_cast<int>(rng.integer(2, 4)), 0.5, 1.0); break;
        }
        const auto r = ocsvm::fit_with_report(pts, nu, kernel);
        const double ub = 1.0 / (std::max(nu, ocsvm::kMinNu) * n);
        const double optimum = oracle::box_simplex_qp_optimum(ocsvm::gram_matrix(pts, kernel), ub);
        worst_gap = std::max(worst_gap, std::abs(r.report.objective - optimum));

        // KKT: stationarity against rho per bound class, plus primal feasibility
        const double rho = r.model.rho;
        double sum = 0.0;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const double a = r.report.alphas[i], gi = r.report.gradient[i];
            sum += a;
            double res = std::max(0.0, -a) + std::max(0.0, a - ub);
            if (a <= 0.0) res = std::max(res, rho - gi);
            else if (a >= ub) res = std::max(res, gi - rho);
            else res = std::max(res, std::abs(gi - rho));
            worst_kkt = std::max(worst_kkt, res);
        }
        worst_kkt = std::max(worst_kkt, std::abs(sum - 1.0));
    }
    const double t = seconds_since(t0);
    return {worst_gap < 1e-6 && worst_kkt < 1e-6 && t < 60.0,
            fmt("max objective gap %.1e, max KKT residual %.1e, %.1f s", worst_gap, worst_kkt, t)};
}

// --- 5 ------------------------------------------------------------------

Outcome nu_property() {
    const int n = 200;
    bool ok = true;
    std::string worst;
    double worst_margin = INFINITY;
    for (int seed = 1; seed <= 5; ++seed) {
        Rng rng(mix_seed(5, static_cast<std::uint64_t>(seed)));
        std::vector<ocsvm::Point> pts(n, ocsvm::Point(2));
        for (auto& p : pts) {
            // two blobs of unequal size
            const double shift = rng.uniform() < 0.3 ? 3.0 : 0.0;
            p[0] = rng.normal() + shift;
            p[1] = 0.5 * rng.normal() - shift;
        }
        const auto kernel = ocsvm::KernelSpec::rbf(ocsvm::default_gamma(pts));
        for (double nu : {0.05, 0.1, 0.25, 0.5}) {
            const auto m = ocsvm::fit(pts, nu, kernel);
            std::size_t out = 0;
            for (const auto& p : pts) out += ocsvm::classify(m, p) == ocsvm::Label::Outlier;
            const double out_frac = static_cast<double>(out) / n;
            const double sv_frac = static_cast<double>(m.support_vectors.size()) / n;
            const bool good = out_frac <= nu + 1.0 / n && sv_frac >= nu - 1.0 / n;
            ok = ok && good;
            const double margin = std::min(nu + 1.0 / n - out_frac, sv_frac - (nu - 1.0 / n));
            if (margin < worst_margin) {
                worst_margin = margin;
                worst = fmt("seed %d nu %.2f: outliers %.3f, SVs %.3f", seed, nu, out_frac, sv_frac);
            }
        }
    }
    return {ok, "tightest case " + worst};
}

// --- 6 ------------------------------------------------------------------

Outcome fdd_oracle() {
    const auto t0 = Clock::now();
    const auto model = synth::default_frame();
    auto run = [&](double k) {
        synth::ExcitationSpec ex;
        ex.duration_s = 120.0;
        ex.seed = mix_seed(6, 1);
        synth::SimulationOptions opt;
        opt.noise_seed = mix_seed(6, 2);
        const synth::DamageScenario sc{k == 1.0 ? 1 : 2, std::vector<double>(4, k)};
        return std::pair{fdd::identify(synth::simulate(model, sc, ex, 4, opt)), synth::analytic_modes(model, sc)};
    };
    const auto [base, analytic] = run(1.0);
    const auto [half, analytic_half] = run(0.5);
    bool ok = base.frequencies.size() >= 2 && half.frequencies.size() >= 2;
    double worst_rel = 0.0, worst_shift = 0.0;
    if (ok) {
        for (int m = 0; m < 2; ++m) {
            worst_rel = std::max(worst_rel, std::abs(base.frequencies[m] / analytic[m].frequency_hz - 1.0));
            const double shift = fdd::percent_shift(base.frequencies[m], half.frequencies[m]);
            worst_shift = std::max(worst_shift, std::abs(shift - (1.0 / std::sqrt(2.0) - 1.0) * 100.0));
        }
    }
    const double t = seconds_since(t0);
    ok = ok && worst_rel < 0.02 && worst_shift < 1.0 && t < 30.0;
    return {ok, fmt("modes %.3f/%.3f Hz vs analytic %.3f/%.3f (max %.2f%%), shift error %.2f points, %.1f s",
                    base.frequencies.size() > 0 ? base.frequencies[0] : NAN,
                    base.frequencies.size() > 1 ? base.frequencies[1] : NAN, analytic[0].frequency_hz,
                    analytic[1].frequency_hz, 100 * worst_rel, worst_shift, t)};
}

// --- 7..10: full pipeline runs --------------------------------------------

struct Run {
    fs::path dir;
    io::ModelBundle bundle;
    io::Dataset data;
    scoring::ScoreResult result;
    double seconds = 0.0;
};

// generate -> train -> score -> fdd -> report, all into `dir`.
Run full_run(const io::RunConfig& cfg, const fs::path& dir, bool with_fdd = true) {
    Run r;
    r.dir = dir;
    fs::remove_all(dir);
    const auto t0 = Clock::now();
    io::cmd_generate(cfg, dir / "data", quiet);
    r.data = io::load_dataset(dir / "data");
    r.bundle = io::train(cfg, r.data, std::nullopt, quiet);
    io::save_bundle(dir / "bundle.json", r.bundle);
    io::cmd_score(dir / "bundle.json", dir / "data", dir / "out");
    if (with_fdd) io::cmd_fdd(cfg, dir / "data", dir / "out");
    io::cmd_report(dir / "out");
    r.seconds = seconds_since(t0);
    r.result = io::score(r.bundle, r.data);
    return r;
}

const std::vector<synth::LadderEntry>& ladder() {
    static const auto l = synth::default_ladder();
    return l;
}

Outcome detection_pattern(const Run& run) {
    const auto& pod = run.result.pod;
    int severe = 0, mild = 0;
    double s_max = -1, s_min = INFINITY;
    for (const auto& e : ladder()) {
        if (e.scenario.undamaged()) continue;
        const double s = e.scenario.severity();
        if (s > s_max) s_max = s, severe = e.scenario.scenario_id;
        if (s < s_min) s_min = s, mild = e.scenario.scenario_id;
    }
    const double c1 = pod.summary(1).mean, cs = pod.summary(severe).mean, cm = pod.summary(mild).mean;
    const bool ok = c1 < 15.0 && cs > 85.0 && cs > cm && run.seconds < 600.0;
    return {ok, fmt("case 1 %.2f%% (< 15), severe case %d %.2f%% (> 85), mildest case %d %.2f%%, %.0f s", c1, severe, cs,
                    mild, cm, run.seconds)};
}

std::vector<double> ranks(const std::vector<double>& v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        for (std::size_t k = i; k <= j; ++k) r[order[k]] = 0.5 * static_cast<double>(i + j) + 1.0;  // ties share
        i = j + 1;
    }
    return r;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

Outcome kl_tracks_severity(const Run& run) {
    std::vector<double> severity, kl;
    std::string listing;
    for (const auto& e : ladder()) {
        if (e.scenario.undamaged()) continue;
        severity.push_back(e.scenario.severity());
        kl.push_back(run.result.kl.average(e.scenario.scenario_id));
        listing += fmt(" %d:%.3f", e.scenario.scenario_id, kl.back());
    }
    const double rho = pearson(ranks(severity), ranks(kl));
    return {severity.size() == 8 && rho >= 0.8, fmt("Spearman %.3f over %zu cases; KL_avg%s", rho, severity.size(),
                                                    listing.c_str())};
}

double median3(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

Outcome ae_vs_vae(const Run& base, const io::RunConfig& cfg, const fs::path& work) {
    // case 1 alone is enough: training and the holdout only touch undamaged data
    std::vector<double> vae_pod{base.result.pod.summary(1).mean}, ae_pod;
    std::string listing;
    for (std::uint64_t k = 0; k < 3; ++k) {
        io::RunConfig c = cfg;
        c.seed = cfg.seed + k;
        c.cases = {1};
        if (k > 0) vae_pod.push_back(full_run(c, work / ("vae_seed" + std::to_string(c.seed)), false).result.pod.summary(1).mean);
        c.mode = vae::Mode::Deterministic;
        ae_pod.push_back(full_run(c, work / ("ae_seed" + std::to_string(c.seed)), false).result.pod.summary(1).mean);
        listing += fmt(" seed %llu: AE %.2f / VAE %.2f;", static_cast<unsigned long long>(c.seed), ae_pod.back(),
                       vae_pod.back());
    }
    const double ae = median3(ae_pod), va = median3(vae_pod);
    return {ae >= va, fmt("median case-1 PoD_avg AE %.2f%% vs VAE %.2f%%;%s", ae, va, listing.c_str())};
}

Outcome determinism(const Run& a, const io::RunConfig& cfg, const fs::path& work) {
    const auto b = full_run(cfg, work / "run_b");
    std::vector<std::string> differing;
    std::size_t compared = 0;
    for (const auto& entry : fs::directory_iterator(a.dir / "out")) {
        const auto name = entry.path().filename();
        ++compared;
        if (!fs::exists(b.dir / "out" / name) || slurp(entry.path()) != slurp(b.dir / "out" / name))
            differing.push_back(name.string());
    }
    if (slurp(a.dir / "bundle.json") != slurp(b.dir / "bundle.json")) differing.push_back("bundle.json");

    // a reloaded bundle scores exactly like the one that was trained
    const auto loaded = io::load_bundle(a.dir / "bundle.json");
    const auto rescored = io::score(loaded, a.data);
    std::size_t mismatched = 0;
    for (const auto& [key, cell] : a.result.pod.cells) {
        const auto& other = rescored.pod.cell(key.first, key.second);
        if (other.outlier_count != cell.outlier_count || other.frame_count != cell.frame_count) ++mismatched;
    }
    const bool ok = differing.empty() && mismatched == 0 && compared > 0;
    std::string diff;
    for (const auto& d : differing) diff += " " + d;
    return {ok, fmt("%zu report files + bundle compared, differing:%s; reloaded PoD mismatches %zu of %zu", compared,
                    differing.empty() ? " none" : diff.c_str(), mismatched, a.result.pod.cells.size())};
}

}  // namespace

int main(int argc, char** argv) {
    fs::path work = fs::temp_directory_path() / "shm_acceptance";
    std::set<int> only;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--work" && i + 1 < argc) {
            work = argv[++i];
        } else if (arg == "--only" && i + 1 < argc) {
            std::stringstream s(argv[++i]);
            for (std::string tok; std::getline(s, tok, ',');) only.insert(std::stoi(tok));
        } else {
            std::cerr << "usage: acceptance [--work DIR] [--only N[,N...]]\n";
            return 1;
        }
    }
    fs::create_directories(work);
    auto wanted = [&](int n) { return only.empty() || only.count(n) > 0; };

    int failures = 0;
    auto report = [&](int n, const std::function<Outcome()>& check) {
        if (!wanted(n)) return;
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << n << ": " << o.detail << std::endl;
    };

    report(1, framing);
    report(2, gradients);
    report(3, kl_closed_form);
    report(4, ocsvm_oracle);
    report(5, nu_property);
    report(6, fdd_oracle);

    if (wanted(7) || wanted(8) || wanted(9) || wanted(10)) {
        const io::RunConfig cfg;  // shipped defaults, fixed-configuration path
        std::optional<Run> base;
        std::string error;
        try {
            base = full_run(cfg, work / "run_a");
        } catch (const std::exception& e) {
            error = e.what();
        }
        for (int n : {7, 8, 9, 10}) {
            report(n, [&]() -> Outcome {
                if (!base) return {false, "pipeline run failed: " + error};
                switch (n) {
                    case 7: return detection_pattern(*base);
                    case 8: return kl_tracks_severity(*base);
                    case 9: return ae_vs_vae(*base, cfg, work);
                    default: return determinism(*base, cfg, work);
                }
            });
        }
    }
    return failures == 0 ? 0 : 1;
}
