#include "psfdeconv/estimator.hpp"

#include "psfdeconv/error.hpp"
#include "psfdeconv/fft.hpp"
#include "psfdeconv/imageops.hpp"
#include "psfdeconv/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace psfdeconv::estimator {

namespace {

constexpr double kLogFloor = 1e-12;
constexpr int kMinUsableBins = 4;

// PSF folded onto a size x size torus with its centre at index (0, 0).
fft::AlignedBuffer<fft::Complex> otf_on_torus(const optics::CoeffVector& coeffs,
                                              const SpectralConfig& config,
                                              const fft::RealFft2d& plan) {
    const optics::Psf psf = optics::synthesize_psf(
        coeffs, config.pupil, config.psf_size,
        optics::AberrationBasis::standard(config.astigmatism_noll));
    const int q = plan.rows();
    auto field = plan.make_real();
    const int r0 = psf.radius();
    for (int r = 0; r < psf.size(); ++r) {
        const int tr = (((r - r0) % q) + q) % q;
        for (int c = 0; c < psf.size(); ++c) {
            const int tc = (((c - r0) % q) + q) % q;
            field[static_cast<std::size_t>(tr) * q + tc] += psf(r, c);
        }
    }
    auto spectrum = plan.make_spectrum();
    plan.forward(field, spectrum);
    return spectrum;
}

std::vector<double> radial_average(const fft::AlignedBuffer<fft::Complex>& spectrum, int size,
                                   int bins, double whitening_exponent) {
    std::vector<double> sum(static_cast<std::size_t>(bins), 0.0);
    std::vector<double> weight(static_cast<std::size_t>(bins), 0.0);
    const int half_cols = size / 2 + 1;
    for (int ky = 0; ky < size; ++ky) {
        const double fy = static_cast<double>(ky <= size / 2 ? ky : ky - size) / size;
        for (int kx = 0; kx < half_cols; ++kx) {
            const double fx = static_cast<double>(kx) / size;
            const double f = std::hypot(fx, fy);
            if (f <= 0.0 || f > 0.5) continue;
            // Columns other than kx = 0 and the Nyquist column stand for
            // themselves and their Hermitian mirror.
            const bool edge_col = kx == 0 || (size % 2 == 0 && kx == size / 2);
            const double w = edge_col ? 1.0 : 2.0;
            const int bin = std::min(bins - 1, static_cast<int>(f / 0.5 * bins));
            const double power = std::norm(spectrum[static_cast<std::size_t>(ky) * half_cols + kx]);
            sum[static_cast<std::size_t>(bin)] +=
                w * (std::log(power + kLogFloor) + whitening_exponent * std::log(f));
            weight[static_cast<std::size_t>(bin)] += w;
        }
    }
    for (int b = 0; b < bins; ++b) {
        if (weight[static_cast<std::size_t>(b)] <= 0.0) {
            throw GeometryError("field of " + std::to_string(size) + " px is too small for " +
                                std::to_string(bins) + " radial bins");
        }
        sum[static_cast<std::size_t>(b)] /= weight[static_cast<std::size_t>(b)];
    }
    return sum;
}

std::vector<double> tukey_window(int n, double alpha) {
    std::vector<double> w(static_cast<std::size_t>(n), 1.0);
    const double edge = 0.5 * alpha;
    for (int i = 0; i < n; ++i) {
        const double u = (i + 0.5) / n;
        const double d = std::min(u, 1.0 - u);
        if (d < edge) w[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(std::numbers::pi * d / edge);
    }
    return w;
}

struct BinnedPower {
    std::vector<double> power;
    std::vector<double> freq;
    double outside = 0.0;
};

// Mean power and mean frequency per radial bin, plus the mean power beyond
// 0.5 cycles/pixel.
BinnedPower binned_power(const fft::AlignedBuffer<fft::Complex>& spectrum, int size, int bins) {
    BinnedPower out;
    out.power.assign(static_cast<std::size_t>(bins), 0.0);
    out.freq.assign(static_cast<std::size_t>(bins), 0.0);
    std::vector<double> weight(static_cast<std::size_t>(bins), 0.0);
    double outside_w = 0.0;
    const int half_cols = size / 2 + 1;
    for (int ky = 0; ky < size; ++ky) {
        const double fy = static_cast<double>(ky <= size / 2 ? ky : ky - size) / size;
        for (int kx = 0; kx < half_cols; ++kx) {
            const double fx = static_cast<double>(kx) / size;
            const double f = std::hypot(fx, fy);
            if (f <= 0.0) continue;
            const bool edge_col = kx == 0 || (size % 2 == 0 && kx == size / 2);
            const double w = edge_col ? 1.0 : 2.0;
            const double power = std::norm(spectrum[static_cast<std::size_t>(ky) * half_cols + kx]);
            if (f > 0.5) {
                out.outside += w * power;
                outside_w += w;
                continue;
            }
            const auto bin = static_cast<std::size_t>(std::min(bins - 1, static_cast<int>(f / 0.5 * bins)));
            out.power[bin] += w * power;
            out.freq[bin] += w * f;
            weight[bin] += w;
        }
    }
    for (std::size_t b = 0; b < weight.size(); ++b) {
        if (weight[b] <= 0.0) {
            throw GeometryError("field of " + std::to_string(size) + " px is too small for " +
                                std::to_string(bins) + " radial bins");
        }
        out.power[b] /= weight[b];
        out.freq[b] /= weight[b];
    }
    if (outside_w > 0.0) out.outside /= outside_w;
    return out;
}

}  // namespace

Estimate PatchEstimator::estimate(const Image& patch) const {
    if (patch.width() != patch_size() || patch.height() != patch_size()) {
        throw GeometryError("estimator expects " + std::to_string(patch_size()) + "x" +
                            std::to_string(patch_size()) + " patches, got " +
                            std::to_string(patch.width()) + "x" + std::to_string(patch.height()));
    }
    if (!patch.all_finite()) throw DomainError("patch contains non-finite values");
    const Image normalized = imageops::normalize_patch(patch);
    const double spread = patch.max() - patch.min();
    if (!(spread > 1e-12 * std::max(1.0, std::abs(patch.mean())))) {
        return {midpoint(), true};
    }
    return {regress(normalized).clamped(coeff_min(), coeff_max()), false};
}

optics::CoeffVector PatchEstimator::midpoint() const {
    return optics::CoeffVector(std::vector<double>(static_cast<std::size_t>(n_params()),
                                                   0.5 * (coeff_min() + coeff_max())));
}

DictionaryGrid DictionaryGrid::defaults_for(int n_params) {
    DictionaryGrid g;
    g.n_params = n_params;
    g.points_per_axis = n_params == 1 ? 41 : 21;
    return g;
}

double DictionaryGrid::step() const noexcept {
    return points_per_axis > 1 ? (coeff_max - coeff_min) / (points_per_axis - 1) : 0.0;
}

std::vector<optics::CoeffVector> DictionaryGrid::points() const {
    if (n_params < 1 || points_per_axis < 1) throw DomainError("dictionary grid is empty");
    if (!(coeff_max >= coeff_min)) throw DomainError("dictionary grid range is empty");
    std::size_t total = 1;
    for (int n = 0; n < n_params; ++n) total *= static_cast<std::size_t>(points_per_axis);
    std::vector<optics::CoeffVector> out;
    out.reserve(total);
    std::vector<int> idx(static_cast<std::size_t>(n_params), 0);
    for (std::size_t k = 0; k < total; ++k) {
        std::vector<double> a(static_cast<std::size_t>(n_params));
        for (int n = 0; n < n_params; ++n) {
            const int i = idx[static_cast<std::size_t>(n)];
            a[static_cast<std::size_t>(n)] =
                points_per_axis > 1
                    ? coeff_min + (coeff_max - coeff_min) * i / (points_per_axis - 1)
                    : coeff_min;
        }
        out.emplace_back(std::move(a));
        // Last parameter varies fastest.
        for (int n = n_params - 1; n >= 0; --n) {
            if (++idx[static_cast<std::size_t>(n)] < points_per_axis) break;
            idx[static_cast<std::size_t>(n)] = 0;
        }
    }
    return out;
}

void SpectralConfig::validate() const {
    if (bins < 16) throw DomainError("spectral dictionary needs at least 16 bins");
    // Bin 0 needs at least one frequency below 1 / (2 bins) cycles/pixel.
    if (patch_size <= 2 * bins) {
        throw GeometryError("patch size " + std::to_string(patch_size) + " too small for " +
                            std::to_string(bins) + " bins");
    }
    if (!(low_cut >= 0.0 && high_cut >= 0.0 && low_cut + high_cut < 1.0)) {
        throw DomainError("band cutoffs must leave a non-empty band");
    }
    pupil.validate();
}

SpectralDictionary::SpectralDictionary(DictionaryGrid grid, SpectralConfig config,
                                       SpectrumPrior prior, std::vector<DictionaryEntry> entries)
    : grid_(grid), config_(std::move(config)), prior_(std::move(prior)), entries_(std::move(entries)) {
    if (entries_.empty()) throw DomainError("dictionary has no entries");
    for (const auto& e : entries_) {
        if (static_cast<int>(e.signature.size()) != config_.bins) {
            throw ContractError("dictionary signature length differs from bin count");
        }
        for (double v : e.signature) {
            if (!std::isfinite(v)) throw DomainError("dictionary signature is not finite");
        }
    }
}

int SpectralDictionary::first_bin() const noexcept {
    return static_cast<int>(std::floor(config_.low_cut * config_.bins));
}

int SpectralDictionary::last_bin() const noexcept {
    return config_.bins - static_cast<int>(std::floor(config_.high_cut * config_.bins));
}

double SpectralDictionary::distance(const std::vector<double>& a, const std::vector<double>& b) const {
    return distance(a, b, std::vector<bool>(static_cast<std::size_t>(config_.bins), true));
}

double SpectralDictionary::distance(const std::vector<double>& a, const std::vector<double>& b,
                                    const std::vector<bool>& usable) const {
    double mean_diff = 0.0;
    int count = 0;
    for (int i = first_bin(); i < last_bin(); ++i) {
        if (!usable[static_cast<std::size_t>(i)]) continue;
        mean_diff += a[static_cast<std::size_t>(i)] - b[static_cast<std::size_t>(i)];
        ++count;
    }
    if (count == 0) return 0.0;
    mean_diff /= count;
    double acc = 0.0;
    for (int i = first_bin(); i < last_bin(); ++i) {
        if (!usable[static_cast<std::size_t>(i)]) continue;
        const double d = a[static_cast<std::size_t>(i)] - b[static_cast<std::size_t>(i)] - mean_diff;
        acc += d * d;
    }
    return std::sqrt(acc);
}

std::size_t SpectralDictionary::nearest(const std::vector<double>& signature) const {
    PatchSpectrum s;
    s.values = signature;
    s.usable.assign(signature.size(), true);
    return nearest(s);
}

std::size_t SpectralDictionary::nearest(const PatchSpectrum& spectrum) const {
    if (static_cast<int>(spectrum.values.size()) != config_.bins ||
        spectrum.usable.size() != spectrum.values.size()) {
        throw ContractError("signature length differs from dictionary bin count");
    }
    std::vector<bool> usable = spectrum.usable;
    int count = 0;
    for (int i = first_bin(); i < last_bin(); ++i) count += usable[static_cast<std::size_t>(i)] ? 1 : 0;
    // Too few bins clear the noise floor to compare shapes: use the lowest
    // band bins, which carry the most signal.
    if (count < kMinUsableBins) {
        for (int i = first_bin(); i < std::min(last_bin(), first_bin() + kMinUsableBins); ++i) {
            usable[static_cast<std::size_t>(i)] = true;
        }
    }
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const double d = distance(spectrum.values, entries_[i].signature, usable);
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    return best;
}

std::vector<double> radial_log_spectrum(const Image& field, int bins, double whitening_exponent) {
    if (field.width() != field.height()) throw GeometryError("spectral signature needs a square field");
    const int n = field.width();
    const fft::RealFft2d plan(n, n);
    auto buf = plan.make_real();
    std::copy(field.pixels().begin(), field.pixels().end(), buf.data());
    auto spectrum = plan.make_spectrum();
    plan.forward(buf, spectrum);
    return radial_average(spectrum, n, bins, whitening_exponent);
}

PatchSpectrum patch_spectrum(const Image& patch, const SpectralConfig& config) {
    if (patch.width() != patch.height()) throw GeometryError("spectral signature needs a square patch");
    const int n = patch.width();
    const fft::RealFft2d plan(n, n);
    auto buf = plan.make_real();
    if (config.taper_fraction > 0.0) {
        const std::vector<double> w = tukey_window(n, config.taper_fraction);
        // Remove the taper-weighted mean so no DC leaks into the first bins.
        double num = 0.0;
        double den = 0.0;
        for (int r = 0; r < n; ++r) {
            for (int c = 0; c < n; ++c) {
                const double ww = w[static_cast<std::size_t>(r)] * w[static_cast<std::size_t>(c)];
                num += ww * patch(r, c);
                den += ww;
            }
        }
        const double mean = num / den;
        for (int r = 0; r < n; ++r) {
            for (int c = 0; c < n; ++c) {
                buf[static_cast<std::size_t>(r) * n + c] =
                    w[static_cast<std::size_t>(r)] * w[static_cast<std::size_t>(c)] * (patch(r, c) - mean);
            }
        }
    } else {
        std::copy(patch.pixels().begin(), patch.pixels().end(), buf.data());
    }
    auto spectrum = plan.make_spectrum();
    plan.forward(buf, spectrum);
    const BinnedPower bp = binned_power(spectrum, n, config.bins);
    PatchSpectrum out;
    out.noise_floor = bp.outside;
    out.values.resize(bp.power.size());
    out.usable.resize(bp.power.size());
    for (std::size_t b = 0; b < bp.power.size(); ++b) {
        out.values[b] = std::log(std::max(bp.power[b] - bp.outside, 0.0) + kLogFloor) +
                        config.whitening_exponent * std::log(bp.freq[b]);
        out.usable[b] = bp.power[b] > config.noise_margin * bp.outside;
    }
    return out;
}

std::vector<double> patch_signature(const Image& patch, const SpectralConfig& config) {
    return patch_spectrum(patch, config).values;
}

std::vector<double> otf_signature(const optics::CoeffVector& coeffs, const SpectralConfig& config) {
    const fft::RealFft2d plan(config.patch_size, config.patch_size);
    return radial_average(otf_on_torus(coeffs, config, plan), config.patch_size, config.bins, 0.0);
}

namespace {

Image blur_tile(const Image& tile, const optics::CoeffVector& coeffs, const SpectralConfig& config) {
    const fft::RealFft2d plan(config.patch_size, config.patch_size);
    auto otf = otf_on_torus(coeffs, config, plan);
    auto buf = plan.make_real();
    std::copy(tile.pixels().begin(), tile.pixels().end(), buf.data());
    auto spectrum = plan.make_spectrum();
    plan.forward(buf, spectrum);
    for (std::size_t i = 0; i < spectrum.size(); ++i) spectrum[i] *= otf[i];
    plan.inverse(spectrum, buf);
    Image out(config.patch_size, config.patch_size);
    std::transform(buf.data(), buf.data() + buf.size(), out.pixels().begin(),
                   [](double v) { return std::max(v, 0.0); });
    return out;
}

}  // namespace

SpectralDictionary build_dictionary(const DictionaryGrid& grid, const SpectralConfig& config,
                                    const SpectrumPrior& prior) {
    config.validate();
    if (const auto* tex = std::get_if<ReferenceTexture>(&prior)) {
        if (tex->tile.width() != config.patch_size || tex->tile.height() != config.patch_size) {
            throw GeometryError("reference texture tile must be " +
                                std::to_string(config.patch_size) + " px square");
        }
    }
    (void)optics::AberrationBasis::standard(config.astigmatism_noll).noll(grid.n_params - 1);
    const auto points = grid.points();
    std::vector<DictionaryEntry> entries(points.size());
    parallel_for(points.size(), 0, [&](std::size_t i) {
        entries[i].coeffs = points[i];
        if (const auto* tex = std::get_if<ReferenceTexture>(&prior)) {
            entries[i].signature =
                patch_signature(imageops::normalize_patch(blur_tile(tex->tile, points[i], config)), config);
        } else {
            entries[i].signature = otf_signature(points[i], config);
        }
    });
    return SpectralDictionary(grid, config, prior, std::move(entries));
}

Image reference_patch(const SpectralDictionary& dict, const optics::CoeffVector& coeffs) {
    const auto* tex = std::get_if<ReferenceTexture>(&dict.prior());
    if (tex == nullptr) throw ContractError("power-law dictionaries have no reference texture");
    return blur_tile(tex->tile, coeffs, dict.config());
}

optics::CoeffVector estimate_spectral(const Image& patch, const SpectralDictionary& dict) {
    if (patch.width() != dict.config().patch_size || patch.height() != dict.config().patch_size) {
        throw GeometryError("patch does not match the dictionary patch size");
    }
    return dict.entries()[dict.nearest(patch_spectrum(patch, dict.config()))].coeffs;
}

DictionaryEstimator::DictionaryEstimator(std::shared_ptr<const SpectralDictionary> dict)
    : dict_(std::move(dict)) {
    if (!dict_) throw BackendError("dictionary estimator needs a dictionary");
}

optics::CoeffVector DictionaryEstimator::regress(const Image& patch) const {
    return estimate_spectral(patch, *dict_);
}

}  // namespace psfdeconv::estimator
