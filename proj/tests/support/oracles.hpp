#pragma once

// Slow, direct reference computations the library results are checked
// against. Nothing here calls into the FFT paths.

#include "psfdeconv/image.hpp"
#include "psfdeconv/optics.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace oracle {

using psfdeconv::Image;

inline int reflect(int q, int n) {
    while (q < 0 || q >= n) q = q < 0 ? -q - 1 : 2 * n - q - 1;
    return q;
}

// out(r, c) = sum_{i,j} h(i, j) x(r - i + R, c - j + R)
inline Image convolve(const Image& x, const Image& h, bool reflect_border) {
    const int R = (h.width() - 1) / 2;
    Image out(x.width(), x.height());
    for (int r = 0; r < x.height(); ++r) {
        for (int c = 0; c < x.width(); ++c) {
            double acc = 0.0;
            for (int i = 0; i < h.height(); ++i) {
                for (int j = 0; j < h.width(); ++j) {
                    int rr = r - i + R;
                    int cc = c - j + R;
                    if (reflect_border) {
                        rr = reflect(rr, x.height());
                        cc = reflect(cc, x.width());
                    } else if (rr < 0 || cc < 0 || rr >= x.height() || cc >= x.width()) {
                        continue;
                    }
                    acc += h(i, j) * x(rr, cc);
                }
            }
            out(r, c) = acc;
        }
    }
    return out;
}

// Closed-form least squares of reference ~ g * test + b via the 2x2 normal
// equations, then 10 log10(signal / residual).
inline double snr_db(const Image& ref, const Image& test) {
    const double n = static_cast<double>(ref.size());
    double st = 0, sr = 0, stt = 0, str = 0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        const double t = test.pixels()[i];
        const double r = ref.pixels()[i];
        st += t;
        sr += r;
        stt += t * t;
        str += t * r;
    }
    const double det = n * stt - st * st;
    const double g = (n * str - st * sr) / det;
    const double b = (sr - g * st) / n;
    const double mean = sr / n;
    double sig = 0, res = 0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        const double r = ref.pixels()[i];
        const double e = r - (g * test.pixels()[i] + b);
        sig += (r - mean) * (r - mean);
        res += e * e;
    }
    return 10.0 * std::log10(sig / res);
}

// Per-window SSIM summed directly over each 11x11 Gaussian neighbourhood.
inline double ssim(const Image& x, const Image& y) {
    const int w = 11;
    const double sigma = 1.5;
    std::vector<double> g(static_cast<std::size_t>(w * w));
    double gs = 0;
    for (int i = 0; i < w; ++i) {
        for (int j = 0; j < w; ++j) {
            const double d2 = (i - 5) * (i - 5) + (j - 5) * (j - 5);
            g[static_cast<std::size_t>(i * w + j)] = std::exp(-d2 / (2 * sigma * sigma));
            gs += g[static_cast<std::size_t>(i * w + j)];
        }
    }
    for (double& v : g) v /= gs;
    double lo = x.pixels()[0], hi = lo;
    for (double v : x.pixels()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double L = hi - lo;
    const double c1 = (0.01 * L) * (0.01 * L);
    const double c2 = (0.03 * L) * (0.03 * L);
    double total = 0;
    int count = 0;
    for (int r = 0; r + w <= x.height(); ++r) {
        for (int c = 0; c + w <= x.width(); ++c) {
            double mx = 0, my = 0;
            for (int i = 0; i < w; ++i)
                for (int j = 0; j < w; ++j) {
                    const double k = g[static_cast<std::size_t>(i * w + j)];
                    mx += k * x(r + i, c + j);
                    my += k * y(r + i, c + j);
                }
            double vx = 0, vy = 0, cxy = 0;
            for (int i = 0; i < w; ++i)
                for (int j = 0; j < w; ++j) {
                    const double k = g[static_cast<std::size_t>(i * w + j)];
                    const double dx = x(r + i, c + j) - mx;
                    const double dy = y(r + i, c + j) - my;
                    vx += k * dx * dx;
                    vy += k * dy * dy;
                    cxy += k * dx * dy;
                }
            total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            ++count;
        }
    }
    return total / count;
}

// Spread of a kernel about its centroid: trace of the second-moment tensor.
struct Moments {
    double cy = 0, cx = 0, vyy = 0, vxx = 0, vxy = 0;
    double spread() const { return vyy + vxx; }
    // Relative gap between the principal variances.
    double anisotropy() const {
        const double tr = vxx + vyy;
        const double disc = std::sqrt((vxx - vyy) * (vxx - vyy) + 4 * vxy * vxy);
        return disc / (0.5 * tr);
    }
};

inline Moments moments(const Image& h) {
    Moments m;
    double s = 0;
    for (int r = 0; r < h.height(); ++r)
        for (int c = 0; c < h.width(); ++c) {
            s += h(r, c);
            m.cy += r * h(r, c);
            m.cx += c * h(r, c);
        }
    m.cy /= s;
    m.cx /= s;
    for (int r = 0; r < h.height(); ++r)
        for (int c = 0; c < h.width(); ++c) {
            const double dy = r - m.cy, dx = c - m.cx;
            m.vyy += dy * dy * h(r, c) / s;
            m.vxx += dx * dx * h(r, c) / s;
            m.vxy += dx * dy * h(r, c) / s;
        }
    return m;
}

inline Image random_image(int w, int h, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    Image out(w, h);
    for (double& v : out.pixels()) v = u(rng);
    return out;
}

// Odd-sized random non-negative kernel scaled to unit sum.
inline psfdeconv::optics::Psf random_kernel(int size, std::uint64_t seed) {
    return psfdeconv::optics::Psf(random_image(size, size, seed, 0.0, 1.0));
}

}  // namespace oracle
