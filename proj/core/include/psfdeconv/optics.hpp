#pragma once

#include "psfdeconv/image.hpp"

#include <complex>
#include <initializer_list>
#include <span>
#include <vector>

namespace psfdeconv::optics {

// Zernike aberration amplitudes in waves at the pupil edge. Index 0 is
// defocus, index 1 oblique astigmatism; see AberrationBasis for the rest.
class CoeffVector {
public:
    CoeffVector() = default;
    explicit CoeffVector(std::vector<double> values);
    CoeffVector(std::initializer_list<double> values);

    static CoeffVector zeros(int n);

    int size() const noexcept { return static_cast<int>(values_.size()); }
    double operator[](int i) const noexcept { return values_[static_cast<std::size_t>(i)]; }
    double& operator[](int i) noexcept { return values_[static_cast<std::size_t>(i)]; }
    std::span<const double> values() const noexcept { return values_; }
    bool operator==(const CoeffVector&) const = default;

    bool within(double lo, double hi) const noexcept;
    CoeffVector clamped(double lo, double hi) const;

private:
    std::vector<double> values_;
};

// Maps 0-based aberration indices onto Noll indices. The default table is
// index i -> Noll i + 4: defocus, oblique astigmatism (rho^2 sin 2theta),
// vertical astigmatism (rho^2 cos 2theta), coma, ... up to Noll 37.
class AberrationBasis {
public:
    static constexpr int kMaxNoll = 37;

    // `astigmatism_noll` selects which astigmatism term index 1 refers to
    // (5: sin 2theta, 6: cos 2theta); the other one takes index 2.
    static AberrationBasis standard(int astigmatism_noll = 5);
    explicit AberrationBasis(std::vector<int> noll_indices);

    int size() const noexcept { return static_cast<int>(noll_.size()); }
    int noll(int index) const;
    std::span<const int> noll_indices() const noexcept { return noll_; }

private:
    std::vector<int> noll_;
};

struct RadialOrder {
    int n = 0;
    int m = 0;  // signed: m < 0 selects the sine term
};

RadialOrder noll_to_nm(int noll);

// Orthonormal Zernike polynomial Z_j(rho, theta) with Noll normalization.
double zernike_noll(int noll, double rho, double theta);

// Zernike value for a 0-based aberration index under `basis`. Throws
// UnsupportedAberrationError beyond the basis table.
double zernike_eval(int index, double rho, double theta,
                    const AberrationBasis& basis = AberrationBasis::standard());

struct PupilGrid {
    int size = 255;
    double aperture_fraction = 0.5;

    void validate() const;
    int center() const noexcept { return (size - 1) / 2; }
    double aperture_radius_px() const noexcept { return aperture_fraction * center(); }
    bool operator==(const PupilGrid&) const = default;
};

struct ComplexField {
    int size = 0;
    std::vector<std::complex<double>> values;  // row-major size x size

    std::complex<double> operator()(int row, int col) const noexcept {
        return values[static_cast<std::size_t>(row) * size + col];
    }
};

// P(s) * exp(i 2 pi sum_n a_n Z_n(s)) on the grid, zero outside the aperture.
ComplexField pupil_function(const CoeffVector& coeffs, const PupilGrid& grid = {},
                            const AberrationBasis& basis = AberrationBasis::standard());

// Discrete non-negative kernel with unit sum and odd square support.
class Psf {
public:
    // Validates shape and sign, then rescales to unit sum.
    explicit Psf(Image kernel);

    static Psf delta(int size = 1);

    const Image& kernel() const noexcept { return kernel_; }
    int size() const noexcept { return kernel_.width(); }
    int radius() const noexcept { return (kernel_.width() - 1) / 2; }
    double operator()(int row, int col) const noexcept { return kernel_(row, col); }
    bool operator==(const Psf&) const = default;

private:
    Image kernel_;
};

// Incoherent PSF |F(pupil)|^2, centered at ((out_size-1)/2, (out_size-1)/2)
// and renormalized after cropping.
Psf synthesize_psf(const CoeffVector& coeffs, const PupilGrid& grid = {}, int out_size = 127,
                   const AberrationBasis& basis = AberrationBasis::standard());

}  // namespace psfdeconv::optics
