// Hot paths: SMO fit, VAE gradient step, Welch/SVD spectrum, framing.

#include <benchmark/benchmark.h>

#include "shm/fdd.hpp"
#include "shm/ocsvm.hpp"
#include "shm/random.hpp"
#include "shm/signals.hpp"
#include "shm/synth.hpp"
#include "shm/vae.hpp"

using namespace shm;

namespace {

std::vector<ocsvm::Point> blob(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<ocsvm::Point> pts(n, ocsvm::Point(2));
    for (auto& p : pts) {
        p[0] = rng.normal();
        p[1] = 0.5 * rng.normal();
    }
    return pts;
}

void BM_OcSvmFit(benchmark::State& state) {
    const auto pts = blob(static_cast<std::size_t>(state.range(0)), 1);
    const auto kernel = ocsvm::KernelSpec::rbf(ocsvm::default_gamma(pts));
    const double nu = static_cast<double>(state.range(1)) / 1000.0;
    for (auto _ : state) benchmark::DoNotOptimize(ocsvm::fit(pts, nu, kernel).rho);
}
BENCHMARK(BM_OcSvmFit)->ArgsProduct({{100, 300, 1000}, {1, 100}})->Unit(benchmark::kMillisecond);

void BM_VaeLossAndGradients(benchmark::State& state) {
    const int batch = static_cast<int>(state.range(0));
    const auto model = vae::make_model(128, {1, 60, nn::Activation::Sigmoid, 20}, vae::Mode::Variational, 3);
    Rng rng(2);
    Eigen::MatrixXd x(128, batch), eps(20, batch);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform();
    for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = rng.normal();
    for (auto _ : state) benchmark::DoNotOptimize(vae::loss_and_gradients(model, x, eps, 1.0).terms.total);
    state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_VaeLossAndGradients)->Arg(1)->Arg(32)->Arg(128);

void BM_VaeTrainEpochs(benchmark::State& state) {
    Rng rng(4);
    std::vector<Frame> frames(200);
    for (auto& f : frames) {
        for (int i = 0; i < 128; ++i) f.values.push_back(rng.uniform());
    }
    vae::TrainConfig tc;
    tc.max_epochs = 10;
    tc.patience = 5;
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            vae::train(frames, {1, 60, nn::Activation::Sigmoid, 20}, vae::Mode::Variational, tc).best_epoch);
    }
}
BENCHMARK(BM_VaeTrainEpochs)->Unit(benchmark::kMillisecond);

std::vector<SensorRecord> frame_response(double seconds) {
    synth::ExcitationSpec ex;
    ex.duration_s = seconds;
    ex.seed = 5;
    return synth::simulate(synth::default_frame(), {1, {1, 1, 1, 1}}, ex, 4);
}

void BM_Simulate(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(frame_response(static_cast<double>(state.range(0))).size());
}
BENCHMARK(BM_Simulate)->Arg(120)->Unit(benchmark::kMillisecond);

void BM_FddIdentify(benchmark::State& state) {
    const auto recs = frame_response(120.0);
    fdd::WelchOptions w;
    w.nfft = static_cast<std::size_t>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(fdd::identify(recs, w).frequencies.size());
}
BENCHMARK(BM_FddIdentify)->Arg(512)->Arg(1024)->Arg(4096)->Unit(benchmark::kMillisecond);

void BM_WindowAndNormalize(benchmark::State& state) {
    SensorRecord r;
    Rng rng(6);
    for (int i = 0; i < 72000; ++i) r.samples.push_back(rng.normal());
    for (auto _ : state) {
        const auto frames = window(r, 128);
        benchmark::DoNotOptimize(normalize_frames(frames).size());
    }
}
BENCHMARK(BM_WindowAndNormalize);

}  // namespace

BENCHMARK_MAIN();
