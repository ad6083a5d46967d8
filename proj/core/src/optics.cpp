#include "psfdeconv/optics.hpp"

#include "psfdeconv/error.hpp"
#include "psfdeconv/fft.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace psfdeconv::optics {

namespace {

double factorial(int k) {
    double out = 1.0;
    for (int i = 2; i <= k; ++i) out *= i;
    return out;
}

double radial_polynomial(int n, int m, double rho) {
    double acc = 0.0;
    for (int k = 0; k <= (n - m) / 2; ++k) {
        const double sign = (k % 2 == 0) ? 1.0 : -1.0;
        const double c = sign * factorial(n - k) /
                         (factorial(k) * factorial((n + m) / 2 - k) * factorial((n - m) / 2 - k));
        acc += c * std::pow(rho, n - 2 * k);
    }
    return acc;
}

}  // namespace

CoeffVector::CoeffVector(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) throw DomainError("coefficient vector must have at least one entry");
    for (double v : values_) {
        if (!std::isfinite(v)) throw DomainError("coefficient vector contains a non-finite value");
    }
}

CoeffVector::CoeffVector(std::initializer_list<double> values)
    : CoeffVector(std::vector<double>(values)) {}

CoeffVector CoeffVector::zeros(int n) {
    if (n < 1) throw DomainError("coefficient vector must have at least one entry");
    return CoeffVector(std::vector<double>(static_cast<std::size_t>(n), 0.0));
}

bool CoeffVector::within(double lo, double hi) const noexcept {
    return std::all_of(values_.begin(), values_.end(),
                       [&](double v) { return v >= lo && v <= hi; });
}

CoeffVector CoeffVector::clamped(double lo, double hi) const {
    std::vector<double> out(values_);
    for (double& v : out) v = std::clamp(v, lo, hi);
    return CoeffVector(std::move(out));
}

AberrationBasis AberrationBasis::standard(int astigmatism_noll) {
    if (astigmatism_noll != 5 && astigmatism_noll != 6) {
        throw UnsupportedAberrationError("astigmatism term must be Noll 5 or 6, got " +
                                         std::to_string(astigmatism_noll));
    }
    std::vector<int> table;
    for (int j = 4; j <= kMaxNoll; ++j) table.push_back(j);
    if (astigmatism_noll == 6) std::swap(table[1], table[2]);
    return AberrationBasis(std::move(table));
}

AberrationBasis::AberrationBasis(std::vector<int> noll_indices) : noll_(std::move(noll_indices)) {
    for (int j : noll_) {
        if (j < 1 || j > kMaxNoll) {
            throw UnsupportedAberrationError("Noll index " + std::to_string(j) +
                                             " outside supported range 1.." +
                                             std::to_string(kMaxNoll));
        }
    }
}

int AberrationBasis::noll(int index) const {
    if (index < 0 || index >= size()) {
        throw UnsupportedAberrationError("aberration index " + std::to_string(index) +
                                         " beyond supported table of " + std::to_string(size()));
    }
    return noll_[static_cast<std::size_t>(index)];
}

RadialOrder noll_to_nm(int noll) {
    if (noll < 1) throw UnsupportedAberrationError("Noll indices start at 1");
    int n = 0;
    while (noll > (n + 1) * (n + 2) / 2) ++n;
    const int k = noll - n * (n + 1) / 2 - 1;
    const int m_abs = (n % 2 == 0) ? 2 * ((k + 1) / 2) : 2 * (k / 2) + 1;
    // Noll convention: even j carries cos(m theta), odd j carries sin(m theta).
    const int m = (m_abs == 0 || noll % 2 == 0) ? m_abs : -m_abs;
    return {n, m};
}

double zernike_noll(int noll, double rho, double theta) {
    const auto [n, m] = noll_to_nm(noll);
    const int m_abs = std::abs(m);
    const double radial = radial_polynomial(n, m_abs, rho);
    if (m == 0) return std::sqrt(static_cast<double>(n + 1)) * radial;
    const double norm = std::sqrt(2.0 * (n + 1));
    return norm * radial * (m > 0 ? std::cos(m_abs * theta) : std::sin(m_abs * theta));
}

double zernike_eval(int index, double rho, double theta, const AberrationBasis& basis) {
    return zernike_noll(basis.noll(index), rho, theta);
}

void PupilGrid::validate() const {
    if (size < 3 || size % 2 == 0) {
        throw GeometryError("pupil grid size must be odd and >= 3, got " + std::to_string(size));
    }
    if (!(aperture_fraction > 0.0 && aperture_fraction <= 1.0)) {
        throw GeometryError("aperture fraction must lie in (0, 1]");
    }
}

ComplexField pupil_function(const CoeffVector& coeffs, const PupilGrid& grid,
                            const AberrationBasis& basis) {
    grid.validate();
    if (coeffs.size() < 1) throw DomainError("empty coefficient vector");
    std::vector<int> nolls;
    for (int i = 0; i < coeffs.size(); ++i) nolls.push_back(basis.noll(i));

    ComplexField field{grid.size, std::vector<std::complex<double>>(
                                      static_cast<std::size_t>(grid.size) * grid.size)};
    const double c = grid.center();
    const double radius = grid.aperture_radius_px();
    constexpr double two_pi = 2.0 * std::numbers::pi;
    for (int r = 0; r < grid.size; ++r) {
        for (int col = 0; col < grid.size; ++col) {
            const double dy = (r - c) / radius;
            const double dx = (col - c) / radius;
            const double rho = std::hypot(dx, dy);
            if (rho > 1.0) continue;
            // Image rows grow downward; theta is measured with y pointing up.
            const double theta = std::atan2(-dy, dx);
            double phase = 0.0;
            for (int i = 0; i < coeffs.size(); ++i) {
                if (coeffs[i] != 0.0) phase += coeffs[i] * zernike_noll(nolls[i], rho, theta);
            }
            field.values[static_cast<std::size_t>(r) * grid.size + col] =
                std::polar(1.0, two_pi * phase);
        }
    }
    return field;
}

Psf::Psf(Image kernel) : kernel_(std::move(kernel)) {
    if (kernel_.width() != kernel_.height() || kernel_.width() % 2 == 0) {
        throw GeometryError("PSF support must be odd and square, got " +
                            std::to_string(kernel_.width()) + "x" +
                            std::to_string(kernel_.height()));
    }
    double total = 0.0;
    for (double v : kernel_.pixels()) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError("PSF pixels must be finite and >= 0");
        total += v;
    }
    if (!(total > 0.0)) throw DomainError("PSF has zero total energy");
    kernel_ *= 1.0 / total;
}

Psf Psf::delta(int size) {
    Image k(size, size, 0.0);
    k((size - 1) / 2, (size - 1) / 2) = 1.0;
    return Psf(std::move(k));
}

Psf synthesize_psf(const CoeffVector& coeffs, const PupilGrid& grid, int out_size,
                   const AberrationBasis& basis) {
    grid.validate();
    if (out_size < 1 || out_size % 2 == 0 || out_size > grid.size) {
        throw GeometryError("PSF size must be odd and <= pupil grid size " +
                            std::to_string(grid.size) + ", got " + std::to_string(out_size));
    }
    const ComplexField pupil = pupil_function(coeffs, grid, basis);
    const int n = grid.size;
    fft::AlignedBuffer<fft::Complex> buf(pupil.values.size());
    std::copy(pupil.values.begin(), pupil.values.end(), buf.data());
    fft::complex_fft2d(buf, n, n, /*inverse=*/false);

    // fftshift places the zero frequency at index n/2 == center().
    const int shift = n / 2;
    const int half = (out_size - 1) / 2;
    const int c = grid.center();
    Image kernel(out_size, out_size);
    for (int r = 0; r < out_size; ++r) {
        const int src_r = ((c - half + r - shift) % n + n) % n;
        for (int col = 0; col < out_size; ++col) {
            const int src_c = ((c - half + col - shift) % n + n) % n;
            kernel(r, col) = std::norm(buf[static_cast<std::size_t>(src_r) * n + src_c]);
        }
    }
    return Psf(std::move(kernel));
}

}  // namespace psfdeconv::optics
