#include "psfdeconv/bench.hpp"

#include "psfdeconv/deconv.hpp"
#include "psfdeconv/error.hpp"
#include "psfdeconv/imageops.hpp"
#include "psfdeconv/io.hpp"
#include "psfdeconv/parallel.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <random>

namespace psfdeconv::bench {

using nlohmann::json;

Image make_grid_image(int size, int cell, int line_width) {
    if (cell < 2 || cell > size) throw GeometryError("grid cell must lie in [2, size]");
    if (line_width < 1 || line_width >= cell || (cell - line_width) % 2 != 0) {
        throw GeometryError("grid line width must be below the cell and share its parity");
    }
    Image out(size, size);
    // Lines sit centred in each cell so the pattern is symmetric under rot90.
    const int a = (cell - line_width) / 2;
    auto on_line = [&](int i) {
        const int m = i % cell;
        return m >= a && m < a + line_width;
    };
    for (int r = 0; r < size; ++r) {
        for (int c = 0; c < size; ++c) out(r, c) = on_line(r) || on_line(c) ? 1.0 : 0.0;
    }
    return out;
}

QuadrantDegradation quadrant_degrade(const Image& image, const QuadrantCoeffs& coeffs, std::uint64_t seed,
                                     const DegradeOptions& options) {
    if (image.width() != image.height() || image.width() % 2 != 0) {
        throw GeometryError("quadrant degradation needs a square, even-sized image");
    }
    const int half = image.width() / 2;
    psfmap::PsfMap truth(image.width(), image.height(), half, half,
                         std::vector<optics::CoeffVector>(coeffs.begin(), coeffs.end()));
    const auto kernels = psfmap::realize_kernels(truth, options.psf_size, options.pupil,
                                                 optics::AberrationBasis::standard(options.astigmatism_noll));
    Image noiseless = deconv::sv_convolve(image, kernels, deconv::build_masks(truth), options.padding,
                                          options.threads);
    for (double& v : noiseless.pixels()) v = std::max(v, 0.0);
    Image degraded = options.photons > 0.0 ? imageops::add_poisson_noise(noiseless, options.photons, seed)
                                           : noiseless;
    return {std::move(degraded), std::move(noiseless), std::move(truth)};
}

double r_squared(const std::vector<optics::CoeffVector>& truth, const std::vector<optics::CoeffVector>& estimate,
                 int param) {
    if (truth.size() != estimate.size()) throw ContractError("R^2 needs equally many truths and estimates");
    if (truth.size() < 2) throw UndefinedRSquaredError("R^2 needs at least two samples");
    double mean = 0.0;
    for (const auto& t : truth) {
        if (param < 0 || param >= t.size()) throw DomainError("parameter index out of range");
        mean += t[param];
    }
    mean /= static_cast<double>(truth.size());
    double ss_tot = 0.0;
    double ss_res = 0.0;
    for (std::size_t k = 0; k < truth.size(); ++k) {
        if (param >= estimate[k].size()) throw DomainError("parameter index out of range");
        ss_tot += (truth[k][param] - mean) * (truth[k][param] - mean);
        ss_res += (truth[k][param] - estimate[k][param]) * (truth[k][param] - estimate[k][param]);
    }
    if (!(ss_tot > 0.0)) throw UndefinedRSquaredError("truth values of parameter " + std::to_string(param) + " do not vary");
    return 1.0 - ss_res / ss_tot;
}

namespace {

std::mt19937_64 trial_stream(std::uint64_t seed, int trial, std::uint32_t purpose) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(trial), purpose};
    return std::mt19937_64(seq);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

QuadrantCoeffs trial_coeffs(const BenchConfig& config, int trial) {
    auto rng = trial_stream(config.seed, trial, 1);
    std::uniform_real_distribution<double> pick(config.coeff_min, config.coeff_max);
    QuadrantCoeffs out;
    for (auto& c : out) {
        std::vector<double> a(static_cast<std::size_t>(config.n_params));
        for (double& v : a) v = pick(rng);
        c = optics::CoeffVector(std::move(a));
    }
    return out;
}

std::uint64_t trial_noise_seed(const BenchConfig& config, int trial) {
    auto rng = trial_stream(config.seed, trial, 2);
    return rng();
}

TrialResult run_trial(const BenchConfig& config, const estimator::PatchEstimator* estimator, int trial,
                      std::optional<TrialImages>* images, StageTimings* timings) {
    StageTimings local;
    TrialResult result;
    result.trial = trial;
    result.truth = trial_coeffs(config, trial);
    const Image gt = make_grid_image(config.grid_size, config.grid_cell, config.grid_line_width);
    try {
        DegradeOptions dopt;
        dopt.psf_size = config.psf_size;
        dopt.photons = config.photons;
        dopt.pupil = config.pupil;
        dopt.astigmatism_noll = config.astigmatism_noll;
        dopt.threads = config.threads;
        auto t0 = std::chrono::steady_clock::now();
        QuadrantDegradation deg = quadrant_degrade(gt, result.truth, trial_noise_seed(config, trial), dopt);
        local.degrade_s = seconds_since(t0);

        t0 = std::chrono::steady_clock::now();
        psfmap::PsfMap used = deg.truth;
        if (estimator != nullptr) {
            const int window = estimator->patch_size();
            if (2 * window < config.grid_size || window >= config.grid_size) {
                throw GeometryError("estimator patch size " + std::to_string(window) +
                                    " does not tile the grid image into quadrants");
            }
            const int stride = config.grid_size - window;
            used = psfmap::smooth_map(
                psfmap::estimate_map(deg.degraded, *estimator, window, stride, config.threads),
                config.smoothing_radius);
            if (used.grid_rows() != 2 || used.grid_cols() != 2) throw GeometryError("estimated map is not 2x2");
        }
        for (int q = 0; q < 4; ++q) result.estimated[static_cast<std::size_t>(q)] = used.at(q / 2, q % 2);
        local.estimate_s = seconds_since(t0);

        t0 = std::chrono::steady_clock::now();
        deconv::RlOptions ropt;
        ropt.iters = config.iters;
        ropt.lambda_tv = config.lambda_tv;
        ropt.threads = config.threads;
        const auto kernels = psfmap::realize_kernels(used, config.psf_size, config.pupil,
                                                     optics::AberrationBasis::standard(config.astigmatism_noll));
        Image restored = deconv::tv_rl_deconvolve(deg.degraded, kernels, deconv::build_masks(used), ropt);
        local.deconvolve_s = seconds_since(t0);

        const auto before = imageops::evaluate(gt, deg.degraded);
        const auto after = imageops::evaluate(gt, restored);
        result.snr_degraded = before.snr_db;
        result.ssim_degraded = before.ssim;
        result.snr_restored = after.snr_db;
        result.ssim_restored = after.ssim;
        if (images) images->emplace(TrialImages{gt, std::move(deg.degraded), std::move(restored), std::move(deg.truth),
                                          std::move(used)});
    } catch (const NumericalFailure& e) {
        throw NumericalFailure("trial " + std::to_string(trial) + ": " + e.what(), e.iteration());
    } catch (const Error& e) {
        throw Error("trial " + std::to_string(trial) + ": " + e.what());
    }
    local.total_s = local.degrade_s + local.estimate_s + local.deconvolve_s;
    if (timings) *timings = local;
    return result;
}

BenchReport run_grid_benchmark(const BenchConfig& config, const estimator::PatchEstimator* estimator,
                               const std::string& estimator_name) {
    if (config.trials < 1) throw DomainError("benchmark needs at least one trial");
    if (estimator && estimator->n_params() != config.n_params) {
        throw ContractError("estimator regresses " + std::to_string(estimator->n_params()) + " parameters, benchmark uses " +
                            std::to_string(config.n_params));
    }
    const auto t0 = std::chrono::steady_clock::now();
    BenchReport report;
    report.estimator = estimator_name;
    report.config = config;
    report.trials.resize(static_cast<std::size_t>(config.trials));
    std::vector<StageTimings> stage(static_cast<std::size_t>(config.trials));
    const int workers = config.threads > 0 ? config.threads : default_threads();
    // Parallel trials run their stages single-threaded; results are
    // position-indexed, so the report does not depend on the worker count.
    BenchConfig inner = config;
    if (workers > 1 && config.trials > 1) inner.threads = 1;
    parallel_for(static_cast<std::size_t>(config.trials), workers > 1 && config.trials > 1 ? workers : 1,
                 [&](std::size_t k) {
                     report.trials[k] = run_trial(inner, estimator, static_cast<int>(k), nullptr, &stage[k]);
                 });
    std::vector<optics::CoeffVector> truth;
    std::vector<optics::CoeffVector> est;
    for (std::size_t k = 0; k < report.trials.size(); ++k) {
        const auto& t = report.trials[k];
        report.snr_degraded += t.snr_degraded;
        report.snr_restored += t.snr_restored;
        report.ssim_degraded += t.ssim_degraded;
        report.ssim_restored += t.ssim_restored;
        truth.insert(truth.end(), t.truth.begin(), t.truth.end());
        est.insert(est.end(), t.estimated.begin(), t.estimated.end());
        report.timings.degrade_s += stage[k].degrade_s;
        report.timings.estimate_s += stage[k].estimate_s;
        report.timings.deconvolve_s += stage[k].deconvolve_s;
    }
    const double n = static_cast<double>(config.trials);
    report.snr_degraded /= n;
    report.snr_restored /= n;
    report.ssim_degraded /= n;
    report.ssim_restored /= n;
    for (int p = 0; p < config.n_params; ++p) {
        if (!estimator) {
            report.r2_per_param.emplace_back();
            continue;
        }
        try {
            report.r2_per_param.emplace_back(r_squared(truth, est, p));
        } catch (const UndefinedRSquaredError&) {
            report.r2_per_param.emplace_back();
        }
    }
    report.timings.total_s = seconds_since(t0);
    return report;
}

namespace {

json coeffs_json(const QuadrantCoeffs& q) {
    json out = json::array();
    for (const auto& c : q) out.push_back(std::vector<double>(c.values().begin(), c.values().end()));
    return out;
}

QuadrantCoeffs coeffs_from(const json& j) {
    if (!j.is_array() || j.size() != 4) throw IoError("quadrant coefficients must list four vectors");
    QuadrantCoeffs q;
    for (std::size_t k = 0; k < 4; ++k) q[k] = optics::CoeffVector(j[k].get<std::vector<double>>());
    return q;
}

}  // namespace

std::shared_ptr<const estimator::SpectralDictionary> grid_dictionary(const BenchConfig& config) {
    const int half = config.grid_size / 2;
    if (config.grid_size % 2 != 0 || half % config.grid_cell != 0) {
        throw GeometryError("grid quadrant is not a whole number of cells");
    }
    estimator::SpectralConfig sc;
    sc.patch_size = half;
    sc.psf_size = config.psf_size;
    sc.pupil = config.pupil;
    sc.astigmatism_noll = config.astigmatism_noll;
    estimator::DictionaryGrid grid = estimator::DictionaryGrid::defaults_for(config.n_params);
    grid.coeff_min = config.coeff_min;
    grid.coeff_max = config.coeff_max;
    const Image tile = make_grid_image(config.grid_size, config.grid_cell, config.grid_line_width)
                           .crop(0, 0, half, half);
    return std::make_shared<const estimator::SpectralDictionary>(
        estimator::build_dictionary(grid, sc, estimator::ReferenceTexture{tile}));
}

std::string to_json(const BenchReport& r) {
    json r2 = json::array();
    for (const auto& v : r.r2_per_param) r2.push_back(v ? json(*v) : json(nullptr));
    json trials = json::array();
    for (const auto& t : r.trials) {
        trials.push_back({{"trial", t.trial},
                          {"true_coeffs", coeffs_json(t.truth)},
                          {"estimated_coeffs", coeffs_json(t.estimated)},
                          {"snr_degraded", t.snr_degraded},
                          {"snr_restored", t.snr_restored},
                          {"ssim_degraded", t.ssim_degraded},
                          {"ssim_restored", t.ssim_restored}});
    }
    const auto& c = r.config;
    json doc{{"estimator", r.estimator},
             {"config",
              {{"trials", c.trials},
               {"n_params", c.n_params},
               {"coeff_min", c.coeff_min},
               {"coeff_max", c.coeff_max},
               {"grid_size", c.grid_size},
               {"grid_cell", c.grid_cell},
               {"grid_line_width", c.grid_line_width},
               {"psf_size", c.psf_size},
               {"photons", c.photons},
               {"iters", c.iters},
               {"lambda_tv", c.lambda_tv},
               {"smoothing_radius", c.smoothing_radius},
               {"seed", c.seed},
               {"threads", c.threads},
               {"pupil_size", c.pupil.size},
               {"aperture_fraction", c.pupil.aperture_fraction},
               {"astigmatism_noll", c.astigmatism_noll}}},
             {"r2_per_param", r2},
             {"snr_degraded", r.snr_degraded},
             {"snr_restored", r.snr_restored},
             {"ssim_degraded", r.ssim_degraded},
             {"ssim_restored", r.ssim_restored},
             {"timings",
              {{"degrade_s", r.timings.degrade_s},
               {"estimate_s", r.timings.estimate_s},
               {"deconvolve_s", r.timings.deconvolve_s},
               {"total_s", r.timings.total_s}}},
             {"trials", trials}};
    return doc.dump(2);
}

BenchReport report_from_json(const std::string& text) {
    try {
        const json doc = json::parse(text);
        BenchReport r;
        r.estimator = doc.at("estimator").get<std::string>();
        const auto& c = doc.at("config");
        r.config.trials = c.at("trials").get<int>();
        r.config.n_params = c.at("n_params").get<int>();
        r.config.coeff_min = c.at("coeff_min").get<double>();
        r.config.coeff_max = c.at("coeff_max").get<double>();
        r.config.grid_size = c.at("grid_size").get<int>();
        r.config.grid_cell = c.at("grid_cell").get<int>();
        r.config.grid_line_width = c.at("grid_line_width").get<int>();
        r.config.psf_size = c.at("psf_size").get<int>();
        r.config.photons = c.at("photons").get<double>();
        r.config.iters = c.at("iters").get<int>();
        r.config.lambda_tv = c.at("lambda_tv").get<double>();
        r.config.smoothing_radius = c.at("smoothing_radius").get<int>();
        r.config.seed = c.at("seed").get<std::uint64_t>();
        r.config.threads = c.at("threads").get<int>();
        r.config.pupil.size = c.at("pupil_size").get<int>();
        r.config.pupil.aperture_fraction = c.at("aperture_fraction").get<double>();
        r.config.astigmatism_noll = c.at("astigmatism_noll").get<int>();
        for (const auto& v : doc.at("r2_per_param")) {
            if (v.is_null()) r.r2_per_param.emplace_back();
            else r.r2_per_param.emplace_back(v.get<double>());
        }
        r.snr_degraded = doc.at("snr_degraded").get<double>();
        r.snr_restored = doc.at("snr_restored").get<double>();
        r.ssim_degraded = doc.at("ssim_degraded").get<double>();
        r.ssim_restored = doc.at("ssim_restored").get<double>();
        const auto& tm = doc.at("timings");
        r.timings.degrade_s = tm.at("degrade_s").get<double>();
        r.timings.estimate_s = tm.at("estimate_s").get<double>();
        r.timings.deconvolve_s = tm.at("deconvolve_s").get<double>();
        r.timings.total_s = tm.at("total_s").get<double>();
        for (const auto& t : doc.at("trials")) {
            TrialResult tr;
            tr.trial = t.at("trial").get<int>();
            tr.truth = coeffs_from(t.at("true_coeffs"));
            tr.estimated = coeffs_from(t.at("estimated_coeffs"));
            tr.snr_degraded = t.at("snr_degraded").get<double>();
            tr.snr_restored = t.at("snr_restored").get<double>();
            tr.ssim_degraded = t.at("ssim_degraded").get<double>();
            tr.ssim_restored = t.at("ssim_restored").get<double>();
            r.trials.push_back(std::move(tr));
        }
        return r;
    } catch (const json::exception& e) {
        throw IoError(std::string("malformed benchmark report: ") + e.what());
    }
}

void write_panels(const std::filesystem::path& path, const Image& gt, const Image& degraded, const Image& restored) {
    if (!gt.same_shape(degraded) || !gt.same_shape(restored)) throw GeometryError("panels must share one shape");
    constexpr int kGap = 4;
    const int w = gt.width();
    const int h = gt.height();
    Image out(3 * w + 2 * kGap, h, 1.0);
    const Image* panels[3] = {&gt, &degraded, &restored};
    for (int p = 0; p < 3; ++p) {
        const Image& img = *panels[p];
        const double lo = img.min();
        const double span = img.max() > lo ? img.max() - lo : 1.0;
        for (int r = 0; r < h; ++r) {
            for (int c = 0; c < w; ++c) out(r, p * (w + kGap) + c) = (img(r, c) - lo) / span;
        }
    }
    io::write_png16(path, out, 0.0, 1.0);
}

}  // namespace psfdeconv::bench
