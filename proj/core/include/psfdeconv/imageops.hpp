#pragma once

#include "psfdeconv/convolution.hpp"
#include "psfdeconv/image.hpp"
#include "psfdeconv/optics.hpp"

#include <cstdint>

namespace psfdeconv::imageops {

// Linear convolution restricted to the input geometry. The FFT field is
// extended to (K_h + K_y - 1) x (L_h + L_y - 1) so no circular wrap occurs;
// `padding` decides what lies beyond the image border (zeros, or the
// half-sample mirror image).
Image fft_convolve(const Image& image, const optics::Psf& kernel, Padding padding = Padding::zero);

// Extends `image` by `margin` pixels on every side with mirrored content.
Image reflect_pad(const Image& image, int margin);

// Scaled-photon Poisson model: each pixel becomes
// Poisson(v / max * photons) / photons * max.
Image add_poisson_noise(const Image& image, double photons_at_max, std::uint64_t seed);

Image normalize_patch(const Image& patch);

inline constexpr double kSnrCapDb = 300.0;

// SNR in dB after the least-squares gain/offset fit of `test` onto
// `reference`; signal power is that of the mean-removed reference.
// A vanishing residual reports kSnrCapDb.
double snr(const Image& reference, const Image& test);

struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
};

// Mean SSIM over all fully-contained Gaussian windows; dynamic range is
// taken from the reference.
double ssim(const Image& reference, const Image& test, const SsimParams& params = {});

struct Metrics {
    double snr_db = 0.0;
    double ssim = 0.0;
};

Metrics evaluate(const Image& reference, const Image& test);

}  // namespace psfdeconv::imageops
