#include "psfdeconv/convolution.hpp"

#include "psfdeconv/error.hpp"

#include <complex>
#include <string>

namespace psfdeconv {

namespace {

fft::RealFft2d make_fft(int in_rows, int in_cols, int kernel_size) {
    if (in_rows <= 0 || in_cols <= 0) {
        throw GeometryError("convolution input must be non-empty, got " + std::to_string(in_cols) +
                            "x" + std::to_string(in_rows));
    }
    return fft::RealFft2d(fft::good_size(in_rows + kernel_size - 1),
                          fft::good_size(in_cols + kernel_size - 1));
}

}  // namespace

ConvolutionPlan::ConvolutionPlan(const optics::Psf& kernel, int in_rows, int in_cols)
    : in_rows_(in_rows),
      in_cols_(in_cols),
      radius_(kernel.radius()),
      fft_(make_fft(in_rows, in_cols, kernel.size())),
      kernel_spectrum_(fft_.make_spectrum()) {
    auto field = fft_.make_real();
    const int k = kernel.size();
    const int cols = fft_.cols();
    for (int r = 0; r < k; ++r)
        for (int c = 0; c < k; ++c) field[static_cast<std::size_t>(r) * cols + c] = kernel(r, c);
    fft_.forward(field, kernel_spectrum_);
}

Image ConvolutionPlan::convolve_full(const Image& in) const {
    if (in.height() != in_rows_ || in.width() != in_cols_) {
        throw GeometryError("convolution plan built for " + std::to_string(in_cols_) + "x" +
                            std::to_string(in_rows_) + " input, got " +
                            std::to_string(in.width()) + "x" + std::to_string(in.height()));
    }
    const int cols = fft_.cols();
    auto field = fft_.make_real();
    for (int r = 0; r < in_rows_; ++r)
        std::copy_n(in.row(r), in_cols_, field.data() + static_cast<std::size_t>(r) * cols);
    auto spectrum = fft_.make_spectrum();
    fft_.forward(field, spectrum);
    for (std::size_t i = 0; i < spectrum.size(); ++i) spectrum[i] *= kernel_spectrum_[i];
    fft_.inverse(spectrum, field);

    Image out(out_cols(), out_rows());
    for (int r = 0; r < out_rows(); ++r)
        std::copy_n(field.data() + static_cast<std::size_t>(r) * cols, out_cols(), out.row(r));
    return out;
}

Image ConvolutionPlan::correlate_full(const Image& g) const {
    if (g.height() != out_rows() || g.width() != out_cols()) {
        throw GeometryError("correlation expects a " + std::to_string(out_cols()) + "x" +
                            std::to_string(out_rows()) + " field");
    }
    const int cols = fft_.cols();
    auto field = fft_.make_real();
    for (int r = 0; r < out_rows(); ++r)
        std::copy_n(g.row(r), out_cols(), field.data() + static_cast<std::size_t>(r) * cols);
    auto spectrum = fft_.make_spectrum();
    fft_.forward(field, spectrum);
    for (std::size_t i = 0; i < spectrum.size(); ++i) spectrum[i] *= std::conj(kernel_spectrum_[i]);
    fft_.inverse(spectrum, field);

    Image out(in_cols_, in_rows_);
    for (int r = 0; r < in_rows_; ++r)
        std::copy_n(field.data() + static_cast<std::size_t>(r) * cols, in_cols_, out.row(r));
    return out;
}

}  // namespace psfdeconv
