#include "cli.hpp"

#include "psfdeconv/bench.hpp"
#include "psfdeconv/datagen.hpp"
#include "psfdeconv/deconv.hpp"
#include "psfdeconv/error.hpp"
#include "psfdeconv/estimator.hpp"
#include "psfdeconv/imageops.hpp"
#include "psfdeconv/io.hpp"
#include "psfdeconv/optics.hpp"
#include "psfdeconv/parallel.hpp"
#include "psfdeconv/psfmap.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace psfdeconv::cli {

namespace fs = std::filesystem;

namespace {

// Raised for bad option combinations found after parsing.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

struct Common {
    int threads = 0;
    bool threads_set = false;
};

// --threads wins over DECONV_THREADS; 0 means all cores.
int resolve_threads(const Common& c) {
    if (c.threads_set) {
        if (c.threads < 0) throw UsageError("--threads must be >= 0");
        return c.threads;
    }
    const char* env = std::getenv("DECONV_THREADS");
    if (env == nullptr || *env == '\0') return 0;
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 0) throw UsageError(std::string("DECONV_THREADS is not a non-negative integer: ") + env);
    return static_cast<int>(v);
}

struct EstimatorChoice {
    std::string spec = "dictionary";
    std::string texture;
    int n_params = 1;
    double coeff_min = 0.0;
    double coeff_max = 2.0;
    int psf_size = 127;
};

void add_estimator_options(CLI::App* cmd, EstimatorChoice& e) {
    cmd->add_option("--estimator", e.spec, "dictionary or model:<path.onnx>")->capture_default_str();
    cmd->add_option("--texture", e.texture,
                    "reference tile for the dictionary (one period of the specimen, window x window)")
        ->check(CLI::ExistingFile);
    cmd->add_option("--n-params", e.n_params, "aberrations regressed per patch")->capture_default_str()
        ->check(CLI::Range(1, 34));
    cmd->add_option("--coeff-min", e.coeff_min)->capture_default_str();
    cmd->add_option("--coeff-max", e.coeff_max)->capture_default_str();
}

std::unique_ptr<estimator::PatchEstimator> make_estimator(const EstimatorChoice& e, int window) {
    if (e.spec.rfind("model:", 0) == 0) {
        if (!e.texture.empty()) throw UsageError("--texture only applies to the dictionary estimator");
        const fs::path model = e.spec.substr(6);
        if (!fs::is_regular_file(model)) throw UsageError("model file not found: " + model.string());
        estimator::ExternalModelOptions opt;
        opt.n_params = e.n_params;
        opt.patch_size = window;
        opt.coeff_min = e.coeff_min;
        opt.coeff_max = e.coeff_max;
        return estimator::load_external_model(model, opt);
    }
    if (e.spec != "dictionary") throw UsageError("unknown estimator '" + e.spec + "'");
    estimator::SpectralConfig sc;
    sc.patch_size = window;
    sc.psf_size = e.psf_size;
    estimator::DictionaryGrid grid = estimator::DictionaryGrid::defaults_for(e.n_params);
    grid.coeff_min = e.coeff_min;
    grid.coeff_max = e.coeff_max;
    estimator::SpectrumPrior prior = estimator::PowerLawPrior{};
    if (!e.texture.empty()) prior = estimator::ReferenceTexture{io::read_image(e.texture)};
    return std::make_unique<estimator::DictionaryEstimator>(
        std::make_shared<const estimator::SpectralDictionary>(estimator::build_dictionary(grid, sc, prior)));
}

fs::path with_extension(fs::path p, const char* ext) {
    p.replace_extension(ext);
    return p;
}

bool is_png(const fs::path& p) { return p.extension() == ".png"; }

void ensure_parent(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

// ---- psf ----

struct PsfArgs {
    std::vector<double> coeffs;
    int size = 127;
    std::string out;
    int pupil_size = 255;
    double aperture = 0.5;
    int astigmatism_noll = 5;
};

int cmd_psf(const PsfArgs& a, std::ostream& out) {
    optics::PupilGrid grid;
    grid.size = a.pupil_size;
    grid.aperture_fraction = a.aperture;
    const optics::Psf h = optics::synthesize_psf(optics::CoeffVector(a.coeffs), grid, a.size,
                                                 optics::AberrationBasis::standard(a.astigmatism_noll));
    const fs::path target = a.out;
    ensure_parent(target);
    const fs::path raw = is_png(target) ? with_extension(target, ".psfraw") : target;
    const fs::path png = is_png(target) ? target : with_extension(target, ".png");
    io::write_raw(raw, h.kernel());
    io::write_png16(png, h.kernel(), 0.0, h.kernel().max());
    out << "raw=" << raw.string() << "\npreview=" << png.string() << "\n";
    return kOk;
}

// ---- dataset ----

struct DatasetArgs {
    std::vector<std::string> sources;
    int synthetic = 0;
    int synthetic_size = 512;
    std::string out;
    datagen::DatasetConfig cfg;
};

int cmd_dataset(DatasetArgs& a, int threads, std::ostream& out) {
    if (a.sources.empty() && a.synthetic <= 0) throw UsageError("dataset needs --source or --synthetic");
    std::vector<Image> sources;
    for (const auto& s : a.sources) sources.push_back(io::read_image(s));
    for (int k = 0; k < a.synthetic; ++k) {
        sources.push_back(datagen::synthetic_cells(a.synthetic_size, a.synthetic_size,
                                                   a.cfg.rng_seed * 1000003ULL + static_cast<std::uint64_t>(k)));
    }
    a.cfg.threads = threads;
    datagen::DatasetWriter writer(a.out, a.cfg.n_params);
    datagen::generate_dataset(sources, a.cfg, [&](datagen::TrainingPair&& p) { writer.add(p); });
    writer.close();
    out << "pairs=" << writer.written() << "\nmanifest=" << (fs::path(a.out) / "manifest.csv").string() << "\n";
    return kOk;
}

// ---- map ----

struct MapArgs {
    std::string input;
    std::string out;
    std::string preview;
    int window = 128;
    int stride = 64;
    int smoothing = 1;
    EstimatorChoice est;
};

int cmd_map(const MapArgs& a, int threads, std::ostream& out) {
    const Image y = io::read_image(a.input);
    const auto est = make_estimator(a.est, a.window);
    const psfmap::PsfMap raw = psfmap::estimate_map(y, *est, a.window, a.stride, threads);
    const psfmap::PsfMap map = psfmap::smooth_map(raw, a.smoothing);
    ensure_parent(a.out);
    psfmap::write_map(a.out, map);
    if (!a.preview.empty()) {
        ensure_parent(a.preview);
        psfmap::write_map_png(a.preview, map, 0, est->coeff_min(), est->coeff_max());
    }
    out << "grid=" << map.grid_rows() << "x" << map.grid_cols() << "\nmap=" << a.out << "\n";
    return kOk;
}

// ---- deconvolve ----

struct DeconvArgs {
    std::string input;
    std::string map;
    std::string out;
    int iters = 20;
    double lambda_tv = 0.001;
    int psf_size = 127;
    int dump_every = 0;
    std::string dump_dir;
};

int cmd_deconvolve(const DeconvArgs& a, int threads, std::ostream& out) {
    if (a.dump_every > 0 && a.dump_dir.empty()) throw UsageError("--dump-every needs --dump-dir");
    const Image y = io::read_image(a.input);
    const psfmap::PsfMap map = psfmap::read_map(a.map);
    deconv::RlOptions opt;
    opt.iters = a.iters;
    opt.lambda_tv = a.lambda_tv;
    opt.threads = threads;
    if (!a.dump_dir.empty()) {
        fs::create_directories(a.dump_dir);
        opt.dump_every = std::max(a.dump_every, 1);
        opt.on_iterate = [&](int it, const Image& x) {
            char name[32];
            std::snprintf(name, sizeof name, "iter_%03d.psfraw", it);
            io::write_raw(fs::path(a.dump_dir) / name, x);
        };
    }
    const Image x = deconv::tv_rl_deconvolve(y, map, opt, a.psf_size);
    ensure_parent(a.out);
    io::write_image(a.out, x);
    out << "restored=" << a.out << "\n";
    return kOk;
}

// ---- metrics ----

struct MetricsArgs {
    std::string reference;
    std::vector<std::string> tests;
};

int cmd_metrics(const MetricsArgs& a, std::ostream& out) {
    const Image ref = io::read_image(a.reference);
    for (const auto& t : a.tests) {
        const auto m = imageops::evaluate(ref, io::read_image(t));
        out << "snr_db=" << fmt(m.snr_db) << " ssim=" << fmt(m.ssim) << "\n";
    }
    return kOk;
}

// ---- benchmark ----

struct BenchArgs {
    bench::BenchConfig cfg;
    std::string estimator = "dictionary";
    std::string out;
    std::string panels;
    std::string dump_dir;
    int dump_trial = 0;
};

int cmd_benchmark(BenchArgs& a, int threads, std::ostream& out) {
    a.cfg.threads = threads;
    if (a.dump_trial < 0 || a.dump_trial >= a.cfg.trials) throw UsageError("--dump-trial outside the trial range");
    std::unique_ptr<estimator::PatchEstimator> est;
    std::string name = a.estimator;
    if (a.estimator == "dictionary") {
        est = std::make_unique<estimator::DictionaryEstimator>(bench::grid_dictionary(a.cfg));
    } else if (a.estimator.rfind("model:", 0) == 0) {
        EstimatorChoice e;
        e.spec = a.estimator;
        e.n_params = a.cfg.n_params;
        e.coeff_min = a.cfg.coeff_min;
        e.coeff_max = a.cfg.coeff_max;
        est = make_estimator(e, 128);
        name = "model";
    } else if (a.estimator != "ground-truth") {
        throw UsageError("unknown estimator '" + a.estimator + "'");
    }
    const bench::BenchReport report = bench::run_grid_benchmark(a.cfg, est.get(), name);

    out << "estimator=" << report.estimator << " trials=" << a.cfg.trials << "\n";
    out << "snr_db degraded=" << fmt(report.snr_degraded) << " restored=" << fmt(report.snr_restored)
        << " gain=" << fmt(report.snr_restored - report.snr_degraded) << "\n";
    out << "ssim degraded=" << fmt(report.ssim_degraded) << " restored=" << fmt(report.ssim_restored)
        << " gain=" << fmt(report.ssim_restored - report.ssim_degraded) << "\n";
    for (std::size_t p = 0; p < report.r2_per_param.size(); ++p) {
        const auto& r2 = report.r2_per_param[p];
        out << "r2_a" << p << "=" << (r2 ? fmt(*r2) : std::string("undefined")) << "\n";
    }
    out << "seconds=" << fmt(report.timings.total_s) << "\n";

    if (!a.out.empty()) {
        ensure_parent(a.out);
        std::ofstream f(a.out);
        if (!f) throw IoError("cannot write " + a.out);
        f << bench::to_json(report) << "\n";
    }
    if (!a.panels.empty() || !a.dump_dir.empty()) {
        std::optional<bench::TrialImages> trial;
        bench::run_trial(a.cfg, est.get(), a.dump_trial, &trial);
        const bench::TrialImages& images = *trial;
        if (!a.panels.empty()) {
            ensure_parent(a.panels);
            bench::write_panels(a.panels, images.ground_truth, images.degraded, images.restored);
        }
        if (!a.dump_dir.empty()) {
            const fs::path d = a.dump_dir;
            fs::create_directories(d);
            io::write_raw(d / "ground_truth.psfraw", images.ground_truth);
            io::write_raw(d / "degraded.psfraw", images.degraded);
            io::write_raw(d / "restored.psfraw", images.restored);
            const int half = a.cfg.grid_size / 2;
            io::write_raw(d / "texture.psfraw", images.ground_truth.crop(0, 0, half, half));
            psfmap::write_map(d / "truth_map.json", images.truth);
            psfmap::write_map(d / "used_map.json", images.used);
        }
    }
    return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Semi-blind spatially-variant deconvolution toolkit", "psfdeconv"};
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::help);

    Common common;
    app.add_option("--threads", common.threads, "worker threads, 0 = all cores (env DECONV_THREADS)")
        ->each([&](const std::string&) { common.threads_set = true; });

    PsfArgs psf;
    auto* c_psf = app.add_subcommand("psf", "synthesize a PSF kernel (PSFRAW01 + 16-bit PNG preview)");
    c_psf->add_option("--coeffs", psf.coeffs, "aberration amplitudes in waves (defocus first)")->required();
    c_psf->add_option("--size", psf.size, "kernel side, odd")->capture_default_str();
    c_psf->add_option("--out", psf.out, "output path (.png or .psfraw)")->required();
    c_psf->add_option("--pupil-size", psf.pupil_size)->capture_default_str();
    c_psf->add_option("--aperture", psf.aperture, "aperture radius as a fraction of the pupil half-width")
        ->capture_default_str();
    c_psf->add_option("--astigmatism-noll", psf.astigmatism_noll, "Noll index of aberration 1 (5 or 6)")
        ->capture_default_str();

    DatasetArgs ds;
    auto* c_ds = app.add_subcommand("dataset", "generate a training set (patches/ + manifest.csv)");
    c_ds->add_option("--source", ds.sources, "source image(s)")->check(CLI::ExistingFile);
    c_ds->add_option("--synthetic", ds.synthetic, "add this many synthetic cell textures as sources")
        ->capture_default_str();
    c_ds->add_option("--synthetic-size", ds.synthetic_size)->capture_default_str();
    c_ds->add_option("--out", ds.out, "output directory")->required();
    c_ds->add_option("--count", ds.cfg.count)->capture_default_str();
    c_ds->add_option("--n-params", ds.cfg.n_params)->capture_default_str();
    c_ds->add_option("--coeff-min", ds.cfg.coeff_min)->capture_default_str();
    c_ds->add_option("--coeff-max", ds.cfg.coeff_max)->capture_default_str();
    c_ds->add_option("--patch-size", ds.cfg.patch_size)->capture_default_str();
    c_ds->add_option("--psf-size", ds.cfg.psf_size)->capture_default_str();
    c_ds->add_option("--photons", ds.cfg.photons_at_max, "photons at image maximum, <= 0 disables noise")
        ->capture_default_str();
    c_ds->add_option("--variance-min", ds.cfg.variance_min)->capture_default_str();
    c_ds->add_option("--white-ratio-max", ds.cfg.white_ratio_max)->capture_default_str();
    c_ds->add_option("--rotations", ds.cfg.rotations, "augmentation angles")->capture_default_str();
    c_ds->add_option("--seed", ds.cfg.rng_seed)->capture_default_str();

    MapArgs mp;
    auto* c_map = app.add_subcommand("map", "estimate a local PSF parameter map");
    c_map->add_option("--input", mp.input, "blurred image")->required()->check(CLI::ExistingFile);
    c_map->add_option("--out", mp.out, "map JSON")->required();
    c_map->add_option("--preview", mp.preview, "false-colour PNG of parameter 0");
    c_map->add_option("--window", mp.window)->capture_default_str();
    c_map->add_option("--stride", mp.stride)->capture_default_str();
    c_map->add_option("--smoothing", mp.smoothing, "median radius, 0 disables")->capture_default_str();
    c_map->add_option("--psf-size", mp.est.psf_size)->capture_default_str();
    add_estimator_options(c_map, mp.est);

    DeconvArgs dc;
    auto* c_dc = app.add_subcommand("deconvolve", "TV-regularised spatially-variant Richardson-Lucy");
    c_dc->add_option("--input", dc.input, "blurred image")->required()->check(CLI::ExistingFile);
    c_dc->add_option("--map", dc.map, "map JSON from `map`")->required()->check(CLI::ExistingFile);
    c_dc->add_option("--out", dc.out, "restored image (.png preview or .psfraw)")->required();
    c_dc->add_option("--iters", dc.iters)->capture_default_str();
    c_dc->add_option("--lambda-tv", dc.lambda_tv)->capture_default_str();
    c_dc->add_option("--psf-size", dc.psf_size)->capture_default_str();
    c_dc->add_option("--dump-every", dc.dump_every, "write every k-th iterate, 0 = off")->capture_default_str();
    c_dc->add_option("--dump-dir", dc.dump_dir, "directory for iterate dumps");

    MetricsArgs mt;
    auto* c_mt = app.add_subcommand("metrics", "SNR and SSIM against a reference");
    c_mt->add_option("--reference", mt.reference)->required()->check(CLI::ExistingFile);
    c_mt->add_option("--test", mt.tests, "one or more images")->required()->check(CLI::ExistingFile);

    BenchArgs bn;
    auto* c_bench = app.add_subcommand("benchmark", "reference experiments");
    c_bench->require_subcommand(1);
    auto* c_grid = c_bench->add_subcommand("synthetic-grid", "four-quadrant blurred grid experiment");
    c_grid->add_option("--estimator", bn.estimator, "ground-truth, dictionary or model:<path.onnx>")
        ->capture_default_str();
    c_grid->add_option("--trials", bn.cfg.trials)->capture_default_str();
    c_grid->add_option("--n-params", bn.cfg.n_params)->capture_default_str();
    c_grid->add_option("--coeff-min", bn.cfg.coeff_min)->capture_default_str();
    c_grid->add_option("--coeff-max", bn.cfg.coeff_max)->capture_default_str();
    c_grid->add_option("--grid-size", bn.cfg.grid_size)->capture_default_str();
    c_grid->add_option("--grid-cell", bn.cfg.grid_cell)->capture_default_str();
    c_grid->add_option("--line-width", bn.cfg.grid_line_width)->capture_default_str();
    c_grid->add_option("--psf-size", bn.cfg.psf_size)->capture_default_str();
    c_grid->add_option("--photons", bn.cfg.photons)->capture_default_str();
    c_grid->add_option("--iters", bn.cfg.iters)->capture_default_str();
    c_grid->add_option("--lambda-tv", bn.cfg.lambda_tv)->capture_default_str();
    c_grid->add_option("--smoothing", bn.cfg.smoothing_radius)->capture_default_str();
    c_grid->add_option("--seed", bn.cfg.seed)->capture_default_str();
    c_grid->add_option("--out", bn.out, "report JSON");
    c_grid->add_option("--panels", bn.panels, "gt | degraded | restored PNG of the dump trial");
    c_grid->add_option("--dump-dir", bn.dump_dir, "PSFRAW01 images and maps of the dump trial");
    c_grid->add_option("--dump-trial", bn.dump_trial)->capture_default_str();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsageError;
    }

    try {
        const int threads = resolve_threads(common);
        if (threads > 0) set_default_threads(threads);
        if (c_psf->parsed()) return cmd_psf(psf, out);
        if (c_ds->parsed()) return cmd_dataset(ds, threads, out);
        if (c_map->parsed()) return cmd_map(mp, threads, out);
        if (c_dc->parsed()) return cmd_deconvolve(dc, threads, out);
        if (c_mt->parsed()) return cmd_metrics(mt, out);
        if (c_grid->parsed()) return cmd_benchmark(bn, threads, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return kUsageError;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kDomainError;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kDomainError;
    }
    err << app.help();
    return kUsageError;
}

}  // namespace psfdeconv::cli
