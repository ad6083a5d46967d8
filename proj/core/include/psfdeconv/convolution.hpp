#pragma once

#include "psfdeconv/fft.hpp"
#include "psfdeconv/image.hpp"
#include "psfdeconv/optics.hpp"

namespace psfdeconv {

enum class Padding { zero, reflect };

// Half-sample symmetric reflection of coordinate q into [0, n):
// ... 2 1 0 | 0 1 2 ... n-1 | n-1 n-2 ...
inline int mirror_index(int q, int n) noexcept {
    const int period = 2 * n;
    int m = q % period;
    if (m < 0) m += period;
    return m < n ? m : period - 1 - m;
}

// Full linear convolution of an (in_rows x in_cols) field with a fixed
// kernel, evaluated on a zero-extended FFT field of at least
// (in + K - 1) per side so the circular transform does not alias.
// The kernel spectrum is computed once; `convolve_full` and its adjoint
// `correlate_full` may be called concurrently.
class ConvolutionPlan {
public:
    ConvolutionPlan(const optics::Psf& kernel, int in_rows, int in_cols);

    int in_rows() const noexcept { return in_rows_; }
    int in_cols() const noexcept { return in_cols_; }
    int out_rows() const noexcept { return in_rows_ + 2 * radius_; }
    int out_cols() const noexcept { return in_cols_ + 2 * radius_; }
    int radius() const noexcept { return radius_; }
    int fft_rows() const noexcept { return fft_.rows(); }
    int fft_cols() const noexcept { return fft_.cols(); }

    // out(t) = sum_u h(t - u) in(u); output is (in + 2r) per side, where
    // output index t corresponds to input coordinate t - r.
    Image convolve_full(const Image& in) const;
    // Adjoint of convolve_full: maps an (in + 2r)-sized field back to the
    // input geometry, adj(u) = sum_t h(t - u) g(t).
    Image correlate_full(const Image& g) const;

private:
    int in_rows_;
    int in_cols_;
    int radius_;
    fft::RealFft2d fft_;
    fft::AlignedBuffer<fft::Complex> kernel_spectrum_;
};

}  // namespace psfdeconv
