#include "psfdeconv/bench.hpp"
#include "psfdeconv/error.hpp"
#include "psfdeconv/imageops.hpp"
#include "psfdeconv/io.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace psfdeconv;
using namespace psfdeconv::bench;

namespace {

// Small enough to keep each trial well under a second.
BenchConfig small_config() {
    BenchConfig c;
    c.trials = 3;
    c.grid_size = 144;
    c.grid_cell = 36;
    c.grid_line_width = 6;
    c.psf_size = 31;
    c.iters = 10;
    c.threads = 1;
    return c;
}

void expect_same_metrics(const BenchReport& a, const BenchReport& b, double tol) {
    ASSERT_EQ(a.trials.size(), b.trials.size());
    for (std::size_t t = 0; t < a.trials.size(); ++t) {
        EXPECT_EQ(a.trials[t].truth, b.trials[t].truth);
        EXPECT_EQ(a.trials[t].estimated, b.trials[t].estimated);
        EXPECT_NEAR(a.trials[t].snr_restored, b.trials[t].snr_restored, tol);
        EXPECT_NEAR(a.trials[t].ssim_restored, b.trials[t].ssim_restored, tol);
    }
    EXPECT_NEAR(a.snr_restored, b.snr_restored, tol);
}

}  // namespace

TEST(GridImage, BinaryRotationSymmetric) {
    const Image g = make_grid_image();
    EXPECT_EQ(g.width(), 252);
    for (double v : g.values()) EXPECT_TRUE(v == 0.0 || v == 1.0);
    EXPECT_EQ(g.rotate90(1), g);
    EXPECT_EQ(g.transpose(), g);
    EXPECT_GT(g.mean(), 0.0);
    EXPECT_LT(g.mean(), 1.0);
    // Two lines per cell and axis: fraction 1 - (1 - lw/cell)^2.
    const double f = 16.0 / 126.0;
    EXPECT_NEAR(g.mean(), 1.0 - (1.0 - f) * (1.0 - f), 1e-12);
    EXPECT_EQ(g(55, 0), 1.0);
    EXPECT_EQ(g(54, 0), 0.0);
    EXPECT_EQ(g(70, 0), 1.0);
    EXPECT_EQ(g(71, 0), 0.0);
}

TEST(GridImage, RejectsBadGeometry) {
    EXPECT_THROW(make_grid_image(252, 126, 15), GeometryError);
    EXPECT_THROW(make_grid_image(252, 126, 126), GeometryError);
    EXPECT_THROW(make_grid_image(100, 200, 16), GeometryError);
    EXPECT_THROW(make_grid_image(252, 1, 0), GeometryError);
}

TEST(QuadrantDegrade, IdenticalQuadrantsReduceToInvariantBlur) {
    const Image img = make_grid_image(128, 32, 6);
    const optics::CoeffVector a{0.8};
    DegradeOptions o;
    o.psf_size = 31;
    o.photons = 0.0;
    const auto d = quadrant_degrade(img, {a, a, a, a}, 1, o);
    EXPECT_EQ(d.truth.grid_rows(), 2);
    EXPECT_EQ(d.truth.window(), 64);
    EXPECT_EQ(d.truth.stride(), 64);
    for (const auto& c : d.truth.cells()) EXPECT_EQ(c, a);
    const Image want = imageops::fft_convolve(img, optics::synthesize_psf(a, {}, 31), Padding::reflect);
    EXPECT_LT(relative_l2(d.noiseless, want), 1e-10);
    EXPECT_EQ(d.degraded, d.noiseless);
}

TEST(QuadrantDegrade, NoiseIsSeededAndNonNegative) {
    const Image img = make_grid_image(128, 32, 6);
    DegradeOptions o;
    o.psf_size = 31;
    const QuadrantCoeffs q{optics::CoeffVector{0.1}, optics::CoeffVector{0.6}, optics::CoeffVector{1.2},
                           optics::CoeffVector{1.9}};
    const auto a = quadrant_degrade(img, q, 5, o);
    const auto b = quadrant_degrade(img, q, 5, o);
    const auto c = quadrant_degrade(img, q, 6, o);
    EXPECT_EQ(a.degraded, b.degraded);
    EXPECT_NE(a.degraded, c.degraded);
    EXPECT_EQ(a.noiseless, c.noiseless);
    EXPECT_GE(a.degraded.min(), 0.0);
    EXPECT_NE(a.degraded, a.noiseless);
    EXPECT_THROW(quadrant_degrade(Image(127, 128), q, 1, o), GeometryError);
}

TEST(RSquared, Examples) {
    const std::vector<optics::CoeffVector> t{{0.0}, {1.0}, {2.0}, {3.0}};
    EXPECT_EQ(r_squared(t, t, 0), 1.0);
    const std::vector<optics::CoeffVector> mean(4, optics::CoeffVector{1.5});
    EXPECT_EQ(r_squared(t, mean, 0), 0.0);
    // Constant offset d: 1 - n d^2 / sum (t - mean)^2 = 1 - 4 * 0.25 / 5.
    const std::vector<optics::CoeffVector> off{{0.5}, {1.5}, {2.5}, {3.5}};
    EXPECT_NEAR(r_squared(t, off, 0), 0.8, 1e-15);
    EXPECT_LT(r_squared(t, {{3.0}, {2.0}, {1.0}, {0.0}}, 0), 0.0);
    EXPECT_THROW(r_squared(mean, t, 0), UndefinedRSquaredError);
    EXPECT_THROW(r_squared(t, mean, 1), DomainError);
    EXPECT_THROW(r_squared(t, {{1.0}}, 0), ContractError);
}

TEST(Benchmark, TrialCoeffsAreDeterministicAndInTheBox) {
    BenchConfig c;
    c.n_params = 2;
    c.coeff_min = 0.25;
    c.coeff_max = 1.5;
    for (int t = 0; t < 20; ++t) {
        const auto q = trial_coeffs(c, t);
        EXPECT_EQ(q, trial_coeffs(c, t));
        for (const auto& v : q) {
            EXPECT_EQ(v.size(), 2);
            EXPECT_TRUE(v.within(0.25, 1.5));
        }
    }
    EXPECT_NE(trial_coeffs(c, 0), trial_coeffs(c, 1));
    EXPECT_NE(trial_noise_seed(c, 0), trial_noise_seed(c, 1));
}

TEST(Benchmark, GroundTruthMapImprovesEveryTrial) {
    const BenchConfig c = small_config();
    const auto r = run_grid_benchmark(c, nullptr);
    EXPECT_EQ(r.estimator, "ground-truth");
    ASSERT_EQ(r.trials.size(), 3u);
    for (const auto& t : r.trials) {
        EXPECT_GT(t.snr_restored, t.snr_degraded);
        EXPECT_GT(t.ssim_restored, t.ssim_degraded);
        EXPECT_EQ(t.estimated, t.truth);
    }
    ASSERT_EQ(r.r2_per_param.size(), 1u);
    EXPECT_FALSE(r.r2_per_param[0].has_value());
    double mean = 0.0;
    for (const auto& t : r.trials) mean += t.snr_restored;
    EXPECT_NEAR(r.snr_restored, mean / 3.0, 1e-12);
    EXPECT_GT(r.timings.total_s, 0.0);
}

TEST(Benchmark, SharpBlurStillRestoresAtLeastAsWell) {
    BenchConfig c = small_config();
    c.coeff_min = 0.0;
    c.coeff_max = 0.0;
    const auto r = run_grid_benchmark(c, nullptr);
    for (const auto& t : r.trials) EXPECT_GE(t.snr_restored, t.snr_degraded);
}

TEST(Benchmark, DictionaryEstimatorRuns) {
    const BenchConfig c = small_config();
    const estimator::DictionaryEstimator est(grid_dictionary(c));
    EXPECT_EQ(est.patch_size(), 72);
    const auto r = run_grid_benchmark(c, &est, "dictionary");
    EXPECT_EQ(r.estimator, "dictionary");
    ASSERT_TRUE(r.r2_per_param[0].has_value());
    for (const auto& t : r.trials)
        for (const auto& q : t.estimated) EXPECT_TRUE(q.within(0.0, 2.0));
}

TEST(Benchmark, GridDictionaryNeedsWholeCells) {
    BenchConfig c = small_config();
    c.grid_cell = 48;  // 72 is not a whole number of cells
    c.grid_line_width = 8;
    EXPECT_THROW(grid_dictionary(c), GeometryError);
}

TEST(Benchmark, ThreadCountDoesNotChangeResults) {
    BenchConfig c = small_config();
    c.trials = 2;
    const auto a = run_grid_benchmark(c, nullptr);
    c.threads = 4;
    const auto b = run_grid_benchmark(c, nullptr);
    expect_same_metrics(a, b, 1e-9);
}

TEST(Benchmark, TrialImagesMatchTheReport) {
    const BenchConfig c = small_config();
    std::optional<TrialImages> images;
    const auto t = run_trial(c, nullptr, 1, &images);
    ASSERT_TRUE(images.has_value());
    EXPECT_EQ(images->ground_truth, make_grid_image(144, 36, 6));
    EXPECT_EQ(images->used, images->truth);
    EXPECT_NEAR(imageops::snr(images->ground_truth, images->restored), t.snr_restored, 1e-12);
    EXPECT_NEAR(imageops::ssim(images->ground_truth, images->degraded), t.ssim_degraded, 1e-12);
    const auto report = run_grid_benchmark(c, nullptr);
    EXPECT_EQ(report.trials[1], t);
}

TEST(Benchmark, ReportJsonRoundTrip) {
    BenchConfig c = small_config();
    c.trials = 2;
    const estimator::DictionaryEstimator est(grid_dictionary(c));
    const auto r = run_grid_benchmark(c, &est, "dictionary");
    EXPECT_EQ(report_from_json(to_json(r)), r);
    EXPECT_THROW(report_from_json("[]"), IoError);
}

TEST(Benchmark, PanelsAreThreeWide) {
    const auto p = std::filesystem::temp_directory_path() / "psfdeconv_test_panels.png";
    const Image g = make_grid_image(64, 32, 6);
    write_panels(p, g, g * 0.5, g);
    const Image back = io::read_png(p);
    EXPECT_EQ(back.width(), 3 * 64 + 2 * 4);  // 4 px gaps
    EXPECT_EQ(back(10, 65), 1.0);
    EXPECT_EQ(back.height(), 64);
}

TEST(Benchmark, SingleThreadRunsAreBitIdentical) {
    BenchConfig c = small_config();
    c.trials = 2;
    const auto a = run_grid_benchmark(c, nullptr);
    const auto b = run_grid_benchmark(c, nullptr);
    EXPECT_EQ(a.trials, b.trials);
    EXPECT_EQ(a.snr_restored, b.snr_restored);
    EXPECT_EQ(a.ssim_restored, b.ssim_restored);
}

TEST(Benchmark, StageErrorsNameTheTrial) {
    BenchConfig c = small_config();
    c.lambda_tv = 1.5;
    try {
        run_trial(c, nullptr, 4);
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("trial 4"), std::string::npos) << e.what();
    }
}
