#pragma once

#include "psfdeconv/convolution.hpp"
#include "psfdeconv/estimator.hpp"
#include "psfdeconv/image.hpp"
#include "psfdeconv/optics.hpp"
#include "psfdeconv/psfmap.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace psfdeconv::bench {

// Binary grid: lines of value 1, `line_width` pixels wide and centred in
// every `cell` pixels, on a background of 0. Symmetric under 90 degree
// rotation. (cell - line_width) must be even.
Image make_grid_image(int size = 252, int cell = 126, int line_width = 16);

struct DegradeOptions {
    int psf_size = 127;
    // <= 0 disables noise.
    double photons = 1000.0;
    Padding padding = Padding::reflect;
    optics::PupilGrid pupil{};
    int astigmatism_noll = 5;
    int threads = 0;
};

struct QuadrantDegradation {
    Image degraded;
    Image noiseless;
    psfmap::PsfMap truth;
};

using QuadrantCoeffs = std::array<optics::CoeffVector, 4>;

// 2x2 map (window = stride = side / 2) with coeffs in row-major quadrant
// order, masked spatially-variant blur, then Poisson noise.
QuadrantDegradation quadrant_degrade(const Image& image, const QuadrantCoeffs& coeffs, std::uint64_t seed,
                                     const DegradeOptions& options = {});

// 1 - SS_res / SS_tot of parameter `param`. Throws UndefinedRSquaredError
// when the truth does not vary.
double r_squared(const std::vector<optics::CoeffVector>& truth,
                 const std::vector<optics::CoeffVector>& estimate, int param);

struct BenchConfig {
    int trials = 100;
    int n_params = 1;
    double coeff_min = 0.0;
    double coeff_max = 2.0;
    int grid_size = 252;
    int grid_cell = 126;
    int grid_line_width = 16;
    int psf_size = 127;
    double photons = 1000.0;
    int iters = 20;
    double lambda_tv = 0.001;
    // A 2x2 map has no interior neighbourhood; median smoothing there only
    // mixes quadrants.
    int smoothing_radius = 0;
    std::uint64_t seed = 7;
    int threads = 0;
    optics::PupilGrid pupil{};
    int astigmatism_noll = 5;

    bool operator==(const BenchConfig&) const = default;
};

struct TrialResult {
    int trial = 0;
    QuadrantCoeffs truth;
    QuadrantCoeffs estimated;
    double snr_degraded = 0.0;
    double snr_restored = 0.0;
    double ssim_degraded = 0.0;
    double ssim_restored = 0.0;

    bool operator==(const TrialResult&) const = default;
};

struct StageTimings {
    double degrade_s = 0.0;
    double estimate_s = 0.0;
    double deconvolve_s = 0.0;
    double total_s = 0.0;

    bool operator==(const StageTimings&) const = default;
};

struct BenchReport {
    std::string estimator;
    BenchConfig config;
    // Empty entries mark an undefined R^2 (no estimator, or constant truth).
    std::vector<std::optional<double>> r2_per_param;
    double snr_degraded = 0.0;
    double snr_restored = 0.0;
    double ssim_degraded = 0.0;
    double ssim_restored = 0.0;
    std::vector<TrialResult> trials;
    StageTimings timings;

    bool operator==(const BenchReport&) const = default;
};

// Everything one trial produces, for panels and pipeline checks.
struct TrialImages {
    Image ground_truth;
    Image degraded;
    Image restored;
    psfmap::PsfMap truth;
    psfmap::PsfMap used;
};

// Per-trial coefficients drawn uniformly from the configured box.
QuadrantCoeffs trial_coeffs(const BenchConfig& config, int trial);
std::uint64_t trial_noise_seed(const BenchConfig& config, int trial);

// One trial. A null estimator deconvolves with the ground-truth map.
TrialResult run_trial(const BenchConfig& config, const estimator::PatchEstimator* estimator, int trial,
                      std::optional<TrialImages>* images = nullptr, StageTimings* timings = nullptr);

BenchReport run_grid_benchmark(const BenchConfig& config, const estimator::PatchEstimator* estimator,
                               const std::string& estimator_name = "ground-truth");

// Spectral dictionary matched to the benchmark: quadrant-sized patches and the
// grid's own quadrant as the reference texture. Needs the quadrant side to be
// a whole number of cells.
std::shared_ptr<const estimator::SpectralDictionary> grid_dictionary(const BenchConfig& config);

std::string to_json(const BenchReport& report);
BenchReport report_from_json(const std::string& text);

// Side-by-side gt | y | restored panel, each rescaled to its own range.
void write_panels(const std::filesystem::path& path, const Image& gt, const Image& degraded,
                  const Image& restored);

}  // namespace psfdeconv::bench
