#include "psfdeconv/datagen.hpp"

#include "psfdeconv/error.hpp"
#include "psfdeconv/imageops.hpp"
#include "psfdeconv/io.hpp"
#include "psfdeconv/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>

namespace psfdeconv::datagen {

namespace {

constexpr int kAttemptsPerPair = 100;

std::mt19937_64 pair_stream(std::uint64_t seed, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
    return std::mt19937_64(seq);
}

optics::Psf psf_for(const optics::CoeffVector& coeffs, const DatasetConfig& cfg) {
    return optics::synthesize_psf(coeffs, cfg.pupil, cfg.psf_size,
                                  optics::AberrationBasis::standard(cfg.astigmatism_noll));
}

// Blur restricted to one patch: convolving the patch neighbourhood (kernel
// radius on each side, clipped to the source) with zero padding gives the
// same pixels as convolving the whole source.
Image blurred_patch(const Image& source, int row, int col, int size, const optics::Psf& psf) {
    const int r = psf.radius();
    const Box region{std::max(0, row - r), std::max(0, col - r),
                     std::min(source.height(), row + size + r),
                     std::min(source.width(), col + size + r)};
    const Image local = imageops::fft_convolve(source.crop(region), psf, Padding::zero);
    Image out = local.crop(row - region.y0, col - region.x0, size, size);
    for (double& v : out.pixels()) v = std::max(v, 0.0);
    return out;
}

struct Attempt {
    std::optional<TrainingPair> pair;
    PatchVerdict verdict = PatchVerdict::accepted;
};

Attempt try_pair(const std::vector<Image>& sources, const DatasetConfig& cfg,
                 std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> pick_source(0, sources.size() - 1);
    std::uniform_real_distribution<double> pick_coeff(cfg.coeff_min, cfg.coeff_max);
    std::uniform_int_distribution<std::size_t> pick_rotation(0, cfg.rotations.size() - 1);

    TrainingPair pair;
    pair.source_index = static_cast<int>(pick_source(rng));
    const Image& src = sources[static_cast<std::size_t>(pair.source_index)];
    std::vector<double> a(static_cast<std::size_t>(cfg.n_params));
    for (double& v : a) v = pick_coeff(rng);
    pair.coeffs = optics::CoeffVector(std::move(a));
    pair.row = std::uniform_int_distribution<int>(0, src.height() - cfg.patch_size)(rng);
    pair.col = std::uniform_int_distribution<int>(0, src.width() - cfg.patch_size)(rng);
    pair.rotation_degrees = cfg.rotations[pick_rotation(rng)];
    const std::uint64_t noise_seed = rng();

    Image patch = blurred_patch(src, pair.row, pair.col, cfg.patch_size, psf_for(pair.coeffs, cfg));
    if (cfg.photons_at_max > 0.0) patch = imageops::add_poisson_noise(patch, cfg.photons_at_max, noise_seed);

    Attempt out;
    out.verdict = classify_patch(patch, cfg);
    if (out.verdict != PatchVerdict::accepted) return out;
    pair.patch = imageops::normalize_patch(patch.rotate90(pair.rotation_degrees / 90));
    out.pair = std::move(pair);
    return out;
}

TrainingPair make_pair(const std::vector<Image>& sources, const DatasetConfig& cfg,
                       std::uint64_t index) {
    auto rng = pair_stream(cfg.rng_seed, index);
    int low_variance = 0;
    int saturated = 0;
    for (int attempt = 0; attempt < kAttemptsPerPair; ++attempt) {
        Attempt a = try_pair(sources, cfg, rng);
        if (a.pair) return std::move(*a.pair);
        (a.verdict == PatchVerdict::low_variance ? low_variance : saturated)++;
    }
    const bool variance_dominates = low_variance >= saturated;
    throw ExhaustionError("pair " + std::to_string(index) + " rejected " +
                          std::to_string(kAttemptsPerPair) + " times; failing filter: " +
                          (variance_dominates ? "minimum variance" : "white pixel ratio") + " (" +
                          std::to_string(variance_dominates ? low_variance : saturated) + " of " +
                          std::to_string(kAttemptsPerPair) + ")");
}

void require_sources(const std::vector<Image>& sources, const DatasetConfig& cfg) {
    if (sources.empty()) throw DomainError("dataset generation needs at least one source image");
    for (const Image& s : sources) {
        if (s.width() < cfg.patch_size || s.height() < cfg.patch_size) {
            throw GeometryError("source image " + std::to_string(s.width()) + "x" +
                                std::to_string(s.height()) + " is smaller than the " +
                                std::to_string(cfg.patch_size) + " px patch");
        }
        for (double v : s.pixels()) {
            if (!(v >= 0.0)) throw DomainError("source images must be non-negative");
        }
    }
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

void DatasetConfig::validate() const {
    if (n_params < 1) throw DomainError("n_params must be >= 1");
    if (!(coeff_max >= coeff_min)) throw DomainError("coefficient range is empty");
    if (patch_size < 1) throw GeometryError("patch size must be positive");
    if (psf_size < 1 || psf_size % 2 == 0) throw GeometryError("PSF size must be odd");
    if (count < 1) throw DomainError("count must be >= 1");
    if (!(white_ratio_max >= 0.0 && white_ratio_max <= 1.0)) {
        throw DomainError("white_ratio_max must lie in [0, 1]");
    }
    if (rotations.empty()) throw DomainError("rotation list is empty");
    for (int deg : rotations) {
        if (deg % 90 != 0) throw DomainError("rotations must be multiples of 90 degrees");
    }
    pupil.validate();
    (void)optics::AberrationBasis::standard(astigmatism_noll).noll(n_params - 1);
}

Image degrade(const Image& source, const optics::CoeffVector& coeffs, const DatasetConfig& cfg,
              std::uint64_t noise_seed) {
    if (source.width() < cfg.patch_size || source.height() < cfg.patch_size) {
        throw GeometryError("source image is smaller than the configured patch size");
    }
    Image blurred = imageops::fft_convolve(source, psf_for(coeffs, cfg), Padding::zero);
    for (double& v : blurred.pixels()) v = std::max(v, 0.0);
    if (cfg.photons_at_max <= 0.0) return blurred;
    return imageops::add_poisson_noise(blurred, cfg.photons_at_max, noise_seed);
}

double white_ratio(const Image& patch) {
    const double threshold = 0.98 * patch.max();
    const auto px = patch.pixels();
    const auto white = std::count_if(px.begin(), px.end(), [&](double v) { return v >= threshold; });
    return static_cast<double>(white) / static_cast<double>(px.size());
}

PatchVerdict classify_patch(const Image& patch, const DatasetConfig& cfg) {
    if (!(patch.variance() >= cfg.variance_min) || patch.variance() == 0.0) {
        return PatchVerdict::low_variance;
    }
    if (white_ratio(patch) > cfg.white_ratio_max) return PatchVerdict::saturated;
    return PatchVerdict::accepted;
}

bool accept_patch(const Image& patch, const DatasetConfig& cfg) {
    return classify_patch(patch, cfg) == PatchVerdict::accepted;
}

void generate_dataset(const std::vector<Image>& sources, const DatasetConfig& cfg,
                      const PairSink& sink) {
    cfg.validate();
    require_sources(sources, cfg);
    const int threads = cfg.threads > 0 ? cfg.threads : default_threads();
    const std::size_t batch = static_cast<std::size_t>(std::max(1, threads)) * 8;
    const auto total = static_cast<std::size_t>(cfg.count);
    for (std::size_t start = 0; start < total; start += batch) {
        const std::size_t n = std::min(batch, total - start);
        std::vector<std::optional<TrainingPair>> slots(n);
        parallel_for(n, threads, [&](std::size_t i) { slots[i] = make_pair(sources, cfg, start + i); });
        for (auto& slot : slots) sink(std::move(*slot));
    }
}

std::vector<TrainingPair> generate_dataset(const std::vector<Image>& sources,
                                           const DatasetConfig& cfg) {
    std::vector<TrainingPair> out;
    out.reserve(static_cast<std::size_t>(std::max(0, cfg.count)));
    generate_dataset(sources, cfg, [&](TrainingPair&& p) { out.push_back(std::move(p)); });
    return out;
}

Image noiseless_patch(const std::vector<Image>& sources, const TrainingPair& pair,
                      const DatasetConfig& cfg) {
    const Image& src = sources.at(static_cast<std::size_t>(pair.source_index));
    return blurred_patch(src, pair.row, pair.col, cfg.patch_size, psf_for(pair.coeffs, cfg))
        .rotate90(pair.rotation_degrees / 90);
}

Image synthetic_cells(int width, int height, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Image img(width, height, 0.04);
    const double area = static_cast<double>(width) * height;

    const int n_cells = std::max(3, static_cast<int>(area / (45.0 * 45.0)));
    for (int k = 0; k < n_cells; ++k) {
        const double cy = u(rng) * height;
        const double cx = u(rng) * width;
        const double ax = 6.0 + 16.0 * u(rng);
        const double ay = ax * (0.5 + 0.5 * u(rng));
        const double angle = u(rng) * std::numbers::pi;
        const double level = 0.25 + 0.5 * u(rng);
        const double ca = std::cos(angle);
        const double sa = std::sin(angle);
        const int reach = static_cast<int>(ax + 3);
        for (int r = std::max(0, static_cast<int>(cy) - reach);
             r < std::min(height, static_cast<int>(cy) + reach + 1); ++r) {
            for (int c = std::max(0, static_cast<int>(cx) - reach);
                 c < std::min(width, static_cast<int>(cx) + reach + 1); ++c) {
                const double dx = c - cx;
                const double dy = r - cy;
                const double px = (ca * dx + sa * dy) / ax;
                const double py = (-sa * dx + ca * dy) / ay;
                const double d = std::sqrt(px * px + py * py);
                // Soft membrane edge plus a brighter nucleus.
                const double body = 1.0 / (1.0 + std::exp((d - 1.0) * 12.0));
                const double nucleus = 1.0 / (1.0 + std::exp((d - 0.35) * 25.0));
                img(r, c) += level * (0.6 * body + 0.4 * nucleus);
            }
        }
    }

    const int n_filaments = std::max(2, static_cast<int>(area / (60.0 * 60.0)));
    for (int k = 0; k < n_filaments; ++k) {
        double y = u(rng) * height;
        double x = u(rng) * width;
        double heading = u(rng) * 2.0 * std::numbers::pi;
        const double level = 0.2 + 0.4 * u(rng);
        const double sigma = 0.7 + 0.8 * u(rng);
        const int steps = 40 + static_cast<int>(80 * u(rng));
        for (int s = 0; s < steps; ++s) {
            heading += (u(rng) - 0.5) * 0.5;
            y += std::sin(heading) * 1.5;
            x += std::cos(heading) * 1.5;
            const int reach = static_cast<int>(3 * sigma) + 1;
            for (int r = std::max(0, static_cast<int>(y) - reach);
                 r < std::min(height, static_cast<int>(y) + reach + 1); ++r) {
                for (int c = std::max(0, static_cast<int>(x) - reach);
                     c < std::min(width, static_cast<int>(x) + reach + 1); ++c) {
                    const double d2 = (r - y) * (r - y) + (c - x) * (c - x);
                    img(r, c) = std::max(img(r, c), 0.04 + level * std::exp(-d2 / (2 * sigma * sigma)));
                }
            }
        }
    }

    const double lo = img.min();
    const double hi = img.max();
    for (double& v : img.pixels()) v = (v - lo) / (hi - lo);
    return img;
}

struct DatasetWriter::Impl {
    std::ofstream manifest;
};

DatasetWriter::DatasetWriter(std::filesystem::path root, int n_params)
    : root_(std::move(root)), n_params_(n_params), impl_(std::make_unique<Impl>()) {
    std::filesystem::create_directories(root_ / "patches");
    impl_->manifest.open(root_ / "manifest.csv");
    if (!impl_->manifest) throw IoError("cannot create " + (root_ / "manifest.csv").string());
    impl_->manifest << "index,filename,scale,offset";
    for (int n = 0; n < n_params_; ++n) impl_->manifest << ",a_" << n;
    impl_->manifest << '\n';
}

DatasetWriter::~DatasetWriter() {
    try {
        close();
    } catch (...) {
    }
}

void DatasetWriter::add(const TrainingPair& pair) {
    if (!impl_->manifest.is_open()) throw IoError("dataset writer already closed");
    if (pair.coeffs.size() != n_params_) {
        throw ContractError("pair has " + std::to_string(pair.coeffs.size()) +
                            " coefficients, dataset expects " + std::to_string(n_params_));
    }
    const std::string name = "patches/" + std::to_string(written_) + ".png";
    const io::Quantization q = io::write_png16(root_ / name, pair.patch);
    impl_->manifest << written_ << ',' << name << ',' << format_double(q.scale) << ','
                    << format_double(q.offset);
    for (double a : pair.coeffs.values()) impl_->manifest << ',' << format_double(a);
    impl_->manifest << '\n';
    ++written_;
}

void DatasetWriter::close() {
    if (impl_ && impl_->manifest.is_open()) {
        impl_->manifest.close();
        if (impl_->manifest.fail()) throw IoError("failed to finalize manifest.csv");
    }
}

std::vector<ManifestRow> read_manifest(const std::filesystem::path& root) {
    std::ifstream is(root / "manifest.csv");
    if (!is) throw IoError("cannot open " + (root / "manifest.csv").string());
    std::string line;
    if (!std::getline(is, line)) throw IoError("manifest.csv is empty");
    int n_params = 0;
    {
        std::stringstream header(line);
        std::string field;
        std::vector<std::string> names;
        while (std::getline(header, field, ',')) names.push_back(field);
        if (names.size() < 5 || names[0] != "index" || names[1] != "filename" ||
            names[2] != "scale" || names[3] != "offset") {
            throw IoError("manifest.csv header is not index,filename,scale,offset,a_0,...");
        }
        n_params = static_cast<int>(names.size()) - 4;
        for (int n = 0; n < n_params; ++n) {
            if (names[static_cast<std::size_t>(4 + n)] != "a_" + std::to_string(n)) {
                throw IoError("manifest.csv coefficient column " + std::to_string(n) + " misnamed");
            }
        }
    }
    std::vector<ManifestRow> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::vector<std::string> f;
        std::string field;
        while (std::getline(ss, field, ',')) f.push_back(field);
        if (static_cast<int>(f.size()) != 4 + n_params) {
            throw IoError("manifest.csv row has " + std::to_string(f.size()) + " fields");
        }
        ManifestRow row;
        row.index = std::stoi(f[0]);
        row.filename = f[1];
        row.scale = std::strtod(f[2].c_str(), nullptr);
        row.offset = std::strtod(f[3].c_str(), nullptr);
        std::vector<double> a;
        for (int n = 0; n < n_params; ++n) a.push_back(std::strtod(f[static_cast<std::size_t>(4 + n)].c_str(), nullptr));
        row.coeffs = optics::CoeffVector(std::move(a));
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<TrainingPair> read_dataset(const std::filesystem::path& root) {
    std::vector<TrainingPair> out;
    for (const ManifestRow& row : read_manifest(root)) {
        Image codes = io::read_png(root / row.filename);
        // read_png maps codes to [0, 1]; undo that before applying the stored mapping.
        for (double& v : codes.pixels()) v = row.offset + row.scale * std::round(v * 65535.0);
        TrainingPair p;
        p.patch = std::move(codes);
        p.coeffs = row.coeffs;
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace psfdeconv::datagen
