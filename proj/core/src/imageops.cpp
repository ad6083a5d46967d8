#include "psfdeconv/imageops.hpp"

#include "psfdeconv/error.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace psfdeconv::imageops {

namespace {

void require_same_shape(const Image& a, const Image& b, const char* op) {
    if (!a.same_shape(b)) {
        throw GeometryError(std::string(op) + ": dimension mismatch " + std::to_string(a.width()) +
                            "x" + std::to_string(a.height()) + " vs " + std::to_string(b.width()) +
                            "x" + std::to_string(b.height()));
    }
}

std::vector<double> gaussian_taps(int window, double sigma) {
    std::vector<double> taps(static_cast<std::size_t>(window));
    const double c = (window - 1) / 2.0;
    double total = 0.0;
    for (int i = 0; i < window; ++i) {
        taps[static_cast<std::size_t>(i)] = std::exp(-((i - c) * (i - c)) / (2.0 * sigma * sigma));
        total += taps[static_cast<std::size_t>(i)];
    }
    for (double& t : taps) t /= total;
    return taps;
}

// Separable "valid" filtering; the output shrinks by window - 1 per axis.
Image filter_valid(const Image& in, const std::vector<double>& taps) {
    const int w = static_cast<int>(taps.size());
    const int out_w = in.width() - w + 1;
    const int out_h = in.height() - w + 1;
    Image horizontal(out_w, in.height());
    for (int r = 0; r < in.height(); ++r) {
        for (int c = 0; c < out_w; ++c) {
            double acc = 0.0;
            for (int k = 0; k < w; ++k) acc += taps[static_cast<std::size_t>(k)] * in(r, c + k);
            horizontal(r, c) = acc;
        }
    }
    Image out(out_w, out_h);
    for (int r = 0; r < out_h; ++r) {
        for (int c = 0; c < out_w; ++c) {
            double acc = 0.0;
            for (int k = 0; k < w; ++k) acc += taps[static_cast<std::size_t>(k)] * horizontal(r + k, c);
            out(r, c) = acc;
        }
    }
    return out;
}

Image product(const Image& a, const Image& b) {
    Image out(a);
    auto po = out.pixels();
    const auto pb = b.pixels();
    for (std::size_t i = 0; i < po.size(); ++i) po[i] *= pb[i];
    return out;
}

}  // namespace

Image reflect_pad(const Image& image, int margin) {
    if (margin < 0) throw GeometryError("reflect_pad: negative margin");
    const int h = image.height();
    const int w = image.width();
    Image out(w + 2 * margin, h + 2 * margin);
    for (int r = 0; r < out.height(); ++r) {
        const int sr = mirror_index(r - margin, h);
        for (int c = 0; c < out.width(); ++c) out(r, c) = image(sr, mirror_index(c - margin, w));
    }
    return out;
}

Image fft_convolve(const Image& image, const optics::Psf& kernel, Padding padding) {
    const int r = kernel.radius();
    if (padding == Padding::reflect && (r > image.width() || r > image.height())) {
        throw GeometryError("kernel radius " + std::to_string(r) + " exceeds the " +
                            std::to_string(image.width()) + "x" + std::to_string(image.height()) +
                            " image it would be mirrored into");
    }
    if (padding == Padding::zero) {
        const ConvolutionPlan plan(kernel, image.height(), image.width());
        return plan.convolve_full(image).crop(r, r, image.height(), image.width());
    }
    const Image padded = reflect_pad(image, r);
    const ConvolutionPlan plan(kernel, padded.height(), padded.width());
    return plan.convolve_full(padded).crop(2 * r, 2 * r, image.height(), image.width());
}

Image add_poisson_noise(const Image& image, double photons_at_max, std::uint64_t seed) {
    if (!(photons_at_max > 0.0) || !std::isfinite(photons_at_max)) {
        throw DomainError("photons_at_max must be a positive finite number");
    }
    for (double v : image.pixels()) {
        if (!(v >= 0.0)) throw DomainError("Poisson noise requires non-negative pixels");
    }
    const double peak = image.max();
    Image out(image.width(), image.height(), 0.0);
    if (peak <= 0.0) return out;
    std::mt19937_64 rng(seed);
    const double to_photons = photons_at_max / peak;
    auto po = out.pixels();
    const auto pi = image.pixels();
    for (std::size_t i = 0; i < pi.size(); ++i) {
        const double lambda = pi[i] * to_photons;
        if (lambda <= 0.0) continue;
        std::poisson_distribution<long long> dist(lambda);
        po[i] = static_cast<double>(dist(rng)) / to_photons;
    }
    return out;
}

Image normalize_patch(const Image& patch) {
    Image out(patch);
    out += -patch.mean();
    return out;
}

double snr(const Image& reference, const Image& test) {
    require_same_shape(reference, test, "snr");
    const auto ref = reference.pixels();
    const auto tst = test.pixels();
    const double mean_ref = reference.mean();
    const double mean_tst = test.mean();
    double cov = 0.0;
    double var_tst = 0.0;
    double signal = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        const double dr = ref[i] - mean_ref;
        const double dt = tst[i] - mean_tst;
        cov += dr * dt;
        var_tst += dt * dt;
        signal += dr * dr;
    }
    if (!(signal > 0.0)) throw DomainError("snr: reference image is constant");
    const double gain = var_tst > 0.0 ? cov / var_tst : 0.0;
    const double offset = mean_ref - gain * mean_tst;
    double residual = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        const double e = ref[i] - (gain * tst[i] + offset);
        residual += e * e;
    }
    // Below ~200 dB the residual is rounding noise of an exact affine match.
    if (residual <= 1e-20 * signal) return kSnrCapDb;
    return std::min(kSnrCapDb, 10.0 * std::log10(signal / residual));
}

double ssim(const Image& reference, const Image& test, const SsimParams& params) {
    require_same_shape(reference, test, "ssim");
    if (reference.width() < params.window || reference.height() < params.window) {
        throw GeometryError("ssim needs images of at least " + std::to_string(params.window) +
                            " pixels per side");
    }
    const double dynamic_range = reference.max() - reference.min();
    if (!(dynamic_range > 0.0)) {
        if (reference == test) return 1.0;
        throw DomainError("ssim: reference is constant but test differs");
    }
    const double c1 = (params.k1 * dynamic_range) * (params.k1 * dynamic_range);
    const double c2 = (params.k2 * dynamic_range) * (params.k2 * dynamic_range);
    const auto taps = gaussian_taps(params.window, params.sigma);

    const Image mu_x = filter_valid(reference, taps);
    const Image mu_y = filter_valid(test, taps);
    const Image xx = filter_valid(product(reference, reference), taps);
    const Image yy = filter_valid(product(test, test), taps);
    const Image xy = filter_valid(product(reference, test), taps);

    double total = 0.0;
    const std::size_t count = mu_x.size();
    for (std::size_t i = 0; i < count; ++i) {
        const double mx = mu_x.pixels()[i];
        const double my = mu_y.pixels()[i];
        const double sxx = xx.pixels()[i] - mx * mx;
        const double syy = yy.pixels()[i] - my * my;
        const double sxy = xy.pixels()[i] - mx * my;
        total += ((2.0 * mx * my + c1) * (2.0 * sxy + c2)) /
                 ((mx * mx + my * my + c1) * (sxx + syy + c2));
    }
    return total / static_cast<double>(count);
}

Metrics evaluate(const Image& reference, const Image& test) {
    return {snr(reference, test), ssim(reference, test)};
}

}  // namespace psfdeconv::imageops
