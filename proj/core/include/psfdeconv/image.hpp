#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace psfdeconv {

// Axis-aligned pixel rectangle, half-open: rows [y0, y1), cols [x0, x1).
struct Box {
    int y0 = 0;
    int x0 = 0;
    int y1 = 0;
    int x1 = 0;

    int height() const noexcept { return y1 - y0; }
    int width() const noexcept { return x1 - x0; }
    bool empty() const noexcept { return y1 <= y0 || x1 <= x0; }
    bool operator==(const Box&) const = default;
};

// Row-major 2D raster of doubles. Non-negativity is not enforced here; the
// deconvolution boundary checks it, training patches are signed.
class Image {
public:
    Image() = default;
    Image(int width, int height, double fill = 0.0);
    Image(int width, int height, std::vector<double> data);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(int row, int col) noexcept {
        return data_[static_cast<std::size_t>(row) * width_ + col];
    }
    double operator()(int row, int col) const noexcept {
        return data_[static_cast<std::size_t>(row) * width_ + col];
    }

    double* row(int r) noexcept { return data_.data() + static_cast<std::size_t>(r) * width_; }
    const double* row(int r) const noexcept { return data_.data() + static_cast<std::size_t>(r) * width_; }

    std::span<double> pixels() noexcept { return data_; }
    std::span<const double> pixels() const noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    bool same_shape(const Image& other) const noexcept {
        return width_ == other.width_ && height_ == other.height_;
    }
    bool operator==(const Image&) const = default;

    double sum() const noexcept;
    double mean() const noexcept;
    double min() const;
    double max() const;
    double variance() const noexcept;
    bool all_finite() const noexcept;

    Image crop(const Box& box) const;
    Image crop(int row, int col, int height, int width) const;
    // Counter-clockwise rotation by quarter_turns * 90 degrees (any integer).
    Image rotate90(int quarter_turns = 1) const;
    Image transpose() const;
    Image flip_horizontal() const;
    Image flip_vertical() const;

    Image& operator+=(const Image& other);
    Image& operator-=(const Image& other);
    Image& operator*=(double s) noexcept;
    Image& operator+=(double s) noexcept;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<double> data_;
};

Image operator+(Image a, const Image& b);
Image operator-(Image a, const Image& b);
Image operator*(Image a, double s);
Image operator*(double s, Image a);

// Squared L2 norm of (a - b).
double squared_distance(const Image& a, const Image& b);
// ||a - b|| / ||b||, or ||a - b|| when b is zero.
double relative_l2(const Image& a, const Image& b);
double max_abs_difference(const Image& a, const Image& b);

}  // namespace psfdeconv
