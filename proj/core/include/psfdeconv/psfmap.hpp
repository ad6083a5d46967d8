#pragma once

#include "psfdeconv/estimator.hpp"
#include "psfdeconv/image.hpp"
#include "psfdeconv/io.hpp"
#include "psfdeconv/optics.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace psfdeconv::psfmap {

// Number of window positions along one axis: (extent - window) / stride + 1.
int grid_count(int extent, int window, int stride);

// Grid of local PSF coefficients. Cell (i, j) describes the window whose
// top-left pixel is (i * stride, j * stride).
class PsfMap {
public:
    PsfMap(int image_width, int image_height, int window, int stride,
           std::vector<optics::CoeffVector> cells, std::vector<bool> low_confidence = {});

    static PsfMap uniform(int image_width, int image_height, int window, int stride,
                          const optics::CoeffVector& coeffs);

    int image_width() const noexcept { return image_width_; }
    int image_height() const noexcept { return image_height_; }
    int window() const noexcept { return window_; }
    int stride() const noexcept { return stride_; }
    int grid_rows() const noexcept { return rows_; }
    int grid_cols() const noexcept { return cols_; }
    int cell_count() const noexcept { return rows_ * cols_; }
    int n_params() const noexcept { return cells_.front().size(); }

    const optics::CoeffVector& at(int i, int j) const;
    bool low_confidence(int i, int j) const;
    const std::vector<optics::CoeffVector>& cells() const noexcept { return cells_; }
    Box cell_box(int i, int j) const;

    // Map of the transposed image.
    PsfMap transpose() const;
    // Values of parameter `param` as a grid_cols x grid_rows raster.
    Image parameter_grid(int param) const;

    bool operator==(const PsfMap&) const = default;

private:
    int image_width_;
    int image_height_;
    int window_;
    int stride_;
    int rows_;
    int cols_;
    std::vector<optics::CoeffVector> cells_;
    std::vector<bool> low_confidence_;
};

// Slides a window x window crop over the image with the given stride and
// estimates every cell; cells are independent and run on `threads` workers.
PsfMap estimate_map(const Image& image, const estimator::PatchEstimator& estimator, int window = 128,
                    int stride = 64, int threads = 0);

// Per-parameter median over the (2r+1)^2 edge-replicated neighbourhood.
// Low-confidence cells do not vote and take the median of their confident
// neighbours (3x3 at least). radius 0 returns the map unchanged.
PsfMap smooth_map(const PsfMap& map, int radius = 1);

// One kernel per cell in row-major order.
std::vector<optics::Psf> realize_kernels(const PsfMap& map, int psf_size = 127,
                                         const optics::PupilGrid& pupil = {},
                                         const optics::AberrationBasis& basis =
                                             optics::AberrationBasis::standard());

std::string to_json(const PsfMap& map);
PsfMap from_json(const std::string& text);
void write_map(const std::filesystem::path& path, const PsfMap& map);
PsfMap read_map(const std::filesystem::path& path);

// Perceptually ordered colour ramp; t is clamped to [0, 1].
io::Rgb false_color(double t);

// Renders parameter `param` at image resolution, each pixel coloured by the
// cell whose window centre is nearest, values mapped from [lo, hi].
void write_map_png(const std::filesystem::path& path, const PsfMap& map, int param, double lo = 0.0,
                   double hi = 2.0);

}  // namespace psfdeconv::psfmap
