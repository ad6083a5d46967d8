#pragma once

#include "psfdeconv/convolution.hpp"
#include "psfdeconv/image.hpp"
#include "psfdeconv/optics.hpp"
#include "psfdeconv/psfmap.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace psfdeconv::deconv {

// Interpolation weight of one map cell, stored on its bounding box only.
struct Mask {
    Box box;
    Image weights;  // box.width() x box.height()

    double at(int row, int col) const noexcept;
};

// Bilinear partition of unity over an image, one mask per map cell in
// row-major order.
class MaskSet {
public:
    MaskSet(int width, int height, std::vector<Mask> masks);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t size() const noexcept { return masks_.size(); }
    const Mask& operator[](std::size_t m) const { return masks_.at(m); }
    const std::vector<Mask>& masks() const noexcept { return masks_; }

    Image full(std::size_t m) const;
    Image sum() const;

private:
    int width_;
    int height_;
    std::vector<Mask> masks_;
};

// Hat functions centred on each cell's window centre, reaching the
// neighbouring centres; outermost cells keep weight 1 out to the border.
MaskSet build_masks(const psfmap::PsfMap& map);
MaskSet build_masks(int width, int height, int grid_rows, int grid_cols, int window, int stride);

// Linear operator x -> sum_m Crop(h_m * Pad(phi_m x)) with its adjoint,
// evaluated patch by patch on each mask's compact support.
class SvOperator {
public:
    SvOperator(std::vector<optics::Psf> kernels, MaskSet masks, Padding padding = Padding::zero,
               int threads = 0);
    ~SvOperator();
    SvOperator(SvOperator&&) noexcept;
    SvOperator& operator=(SvOperator&&) noexcept;

    int width() const noexcept;
    int height() const noexcept;
    std::size_t size() const noexcept;

    Image apply(const Image& x) const;
    Image adjoint(const Image& r) const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

Image sv_convolve(const Image& image, const std::vector<optics::Psf>& kernels, const MaskSet& masks,
                  Padding padding = Padding::zero, int threads = 0);

// div(grad x / sqrt(|grad x|^2 + eps^2)) with forward-difference gradient
// and the matching backward-difference divergence.
Image tv_gradient_term(const Image& x, double eps = 1e-8);

struct RlOptions {
    int iters = 20;
    double lambda_tv = 0.001;
    int threads = 0;
    // Image boundary model for the blur operator.
    Padding padding = Padding::reflect;
    // When set, called with (iteration, iterate) every `dump_every` iterations.
    int dump_every = 1;
    std::function<void(int, const Image&)> on_iterate;
};

// TV-regularised Richardson-Lucy restoration under the masked blur model,
// starting from x0 = y.
Image tv_rl_deconvolve(const Image& y, const std::vector<optics::Psf>& kernels, const MaskSet& masks,
                       const RlOptions& options = {});
Image tv_rl_deconvolve(const Image& y, const psfmap::PsfMap& map, const RlOptions& options = {},
                       int psf_size = 127);

}  // namespace psfdeconv::deconv
