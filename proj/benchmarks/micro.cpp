#include "psfdeconv/bench.hpp"
#include "psfdeconv/datagen.hpp"
#include "psfdeconv/deconv.hpp"
#include "psfdeconv/estimator.hpp"
#include "psfdeconv/imageops.hpp"
#include "psfdeconv/optics.hpp"
#include "psfdeconv/psfmap.hpp"

#include <benchmark/benchmark.h>

using namespace psfdeconv;

namespace {

void bm_synthesize_psf(benchmark::State& state) {
    optics::PupilGrid grid;
    grid.size = static_cast<int>(state.range(0));
    const int out = std::min(127, grid.size);
    for (auto _ : state) benchmark::DoNotOptimize(optics::synthesize_psf({0.7, 0.3}, grid, out));
}
BENCHMARK(bm_synthesize_psf)->Arg(127)->Arg(255)->Unit(benchmark::kMillisecond);

void bm_fft_convolve(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const Image x = datagen::synthetic_cells(n, n, 1);
    const auto k = optics::synthesize_psf({1.0});
    for (auto _ : state) benchmark::DoNotOptimize(imageops::fft_convolve(x, k, Padding::reflect));
}
BENCHMARK(bm_fft_convolve)->Arg(252)->Arg(512)->Unit(benchmark::kMillisecond);

std::vector<optics::Psf> quadrant_kernels() {
    return psfmap::realize_kernels(psfmap::PsfMap(252, 252, 126, 126, {{0.4}, {1.2}, {0.8}, {1.7}}));
}

void bm_sv_convolve(benchmark::State& state) {
    const Image x = bench::make_grid_image();
    const auto masks = deconv::build_masks(252, 252, 2, 2, 126, 126);
    const deconv::SvOperator op(quadrant_kernels(), masks, Padding::reflect, static_cast<int>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(op.apply(x));
}
BENCHMARK(bm_sv_convolve)->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond);

void bm_rl_iteration(benchmark::State& state) {
    const auto q = bench::quadrant_degrade(bench::make_grid_image(),
                                           {optics::CoeffVector{0.4}, optics::CoeffVector{1.2},
                                            optics::CoeffVector{0.8}, optics::CoeffVector{1.7}},
                                           1);
    const auto kernels = quadrant_kernels();
    const auto masks = deconv::build_masks(q.truth);
    deconv::RlOptions o;
    o.iters = 1;
    o.threads = static_cast<int>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(deconv::tv_rl_deconvolve(q.degraded, kernels, masks, o));
}
BENCHMARK(bm_rl_iteration)->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond);

void bm_estimate_map(benchmark::State& state) {
    const auto dict = std::make_shared<estimator::SpectralDictionary>(
        estimator::build_dictionary(estimator::DictionaryGrid::defaults_for(1), estimator::SpectralConfig{}));
    const estimator::DictionaryEstimator est(dict);
    const Image img = datagen::synthetic_cells(576, 576, 2);
    for (auto _ : state) benchmark::DoNotOptimize(psfmap::estimate_map(img, est, 128, 64, static_cast<int>(state.range(0))));
}
BENCHMARK(bm_estimate_map)->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond);

void bm_build_dictionary(benchmark::State& state) {
    const auto grid = estimator::DictionaryGrid::defaults_for(static_cast<int>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(estimator::build_dictionary(grid, estimator::SpectralConfig{}));
}
BENCHMARK(bm_build_dictionary)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
