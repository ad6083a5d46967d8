#include "psfdeconv/image.hpp"

#include "psfdeconv/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace psfdeconv {

namespace {

void require_positive(int width, int height) {
    if (width <= 0 || height <= 0) {
        throw GeometryError("image dimensions must be positive, got " + std::to_string(width) +
                            "x" + std::to_string(height));
    }
}

void require_same_shape(const Image& a, const Image& b, const char* op) {
    if (!a.same_shape(b)) {
        throw GeometryError(std::string(op) + ": dimension mismatch " + std::to_string(a.width()) +
                            "x" + std::to_string(a.height()) + " vs " + std::to_string(b.width()) +
                            "x" + std::to_string(b.height()));
    }
}

}  // namespace

Image::Image(int width, int height, double fill) : width_(width), height_(height) {
    require_positive(width, height);
    data_.assign(static_cast<std::size_t>(width) * height, fill);
}

Image::Image(int width, int height, std::vector<double> data)
    : width_(width), height_(height), data_(std::move(data)) {
    require_positive(width, height);
    if (data_.size() != static_cast<std::size_t>(width) * height) {
        throw GeometryError("image data length " + std::to_string(data_.size()) +
                            " does not match " + std::to_string(width) + "x" +
                            std::to_string(height));
    }
}

double Image::sum() const noexcept { return std::accumulate(data_.begin(), data_.end(), 0.0); }

double Image::mean() const noexcept {
    return data_.empty() ? 0.0 : sum() / static_cast<double>(data_.size());
}

double Image::min() const {
    if (data_.empty()) throw GeometryError("min of empty image");
    return *std::min_element(data_.begin(), data_.end());
}

double Image::max() const {
    if (data_.empty()) throw GeometryError("max of empty image");
    return *std::max_element(data_.begin(), data_.end());
}

double Image::variance() const noexcept {
    if (data_.empty()) return 0.0;
    const double m = mean();
    double acc = 0.0;
    for (double v : data_) acc += (v - m) * (v - m);
    return acc / static_cast<double>(data_.size());
}

bool Image::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Image Image::crop(const Box& box) const {
    if (box.empty() || box.y0 < 0 || box.x0 < 0 || box.y1 > height_ || box.x1 > width_) {
        throw GeometryError("crop box [" + std::to_string(box.y0) + "," + std::to_string(box.y1) +
                            ")x[" + std::to_string(box.x0) + "," + std::to_string(box.x1) +
                            ") outside " + std::to_string(width_) + "x" +
                            std::to_string(height_) + " image");
    }
    Image out(box.width(), box.height());
    for (int r = 0; r < box.height(); ++r) {
        const double* src = &data_[static_cast<std::size_t>(box.y0 + r) * width_ + box.x0];
        std::copy(src, src + box.width(), &out(r, 0));
    }
    return out;
}

Image Image::crop(int row, int col, int height, int width) const {
    return crop(Box{row, col, row + height, col + width});
}

Image Image::rotate90(int quarter_turns) const {
    const int q = ((quarter_turns % 4) + 4) % 4;
    if (q == 0) return *this;
    if (q == 2) {
        Image out(width_, height_);
        std::reverse_copy(data_.begin(), data_.end(), out.data_.begin());
        return out;
    }
    Image out(height_, width_);
    for (int r = 0; r < height_; ++r) {
        for (int c = 0; c < width_; ++c) {
            // Counter-clockwise: (r, c) -> (W-1-c, r); clockwise: (r, c) -> (c, H-1-r).
            if (q == 1) {
                out(width_ - 1 - c, r) = (*this)(r, c);
            } else {
                out(c, height_ - 1 - r) = (*this)(r, c);
            }
        }
    }
    return out;
}

Image Image::transpose() const {
    Image out(height_, width_);
    for (int r = 0; r < height_; ++r)
        for (int c = 0; c < width_; ++c) out(c, r) = (*this)(r, c);
    return out;
}

Image Image::flip_horizontal() const {
    Image out(*this);
    for (int r = 0; r < height_; ++r) {
        auto row = out.pixels().subspan(static_cast<std::size_t>(r) * width_, width_);
        std::reverse(row.begin(), row.end());
    }
    return out;
}

Image Image::flip_vertical() const {
    Image out(width_, height_);
    for (int r = 0; r < height_; ++r) {
        std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(r) * width_, width_,
                    out.data_.begin() + static_cast<std::ptrdiff_t>(height_ - 1 - r) * width_);
    }
    return out;
}

Image& Image::operator+=(const Image& other) {
    require_same_shape(*this, other, "operator+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

Image& Image::operator-=(const Image& other) {
    require_same_shape(*this, other, "operator-=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    return *this;
}

Image& Image::operator*=(double s) noexcept {
    for (double& v : data_) v *= s;
    return *this;
}

Image& Image::operator+=(double s) noexcept {
    for (double& v : data_) v += s;
    return *this;
}

Image operator+(Image a, const Image& b) { return a += b; }
Image operator-(Image a, const Image& b) { return a -= b; }
Image operator*(Image a, double s) { return a *= s; }
Image operator*(double s, Image a) { return a *= s; }

double squared_distance(const Image& a, const Image& b) {
    require_same_shape(a, b, "squared_distance");
    double acc = 0.0;
    const auto pa = a.pixels();
    const auto pb = b.pixels();
    for (std::size_t i = 0; i < pa.size(); ++i) acc += (pa[i] - pb[i]) * (pa[i] - pb[i]);
    return acc;
}

double relative_l2(const Image& a, const Image& b) {
    const double num = std::sqrt(squared_distance(a, b));
    double den = 0.0;
    for (double v : b.pixels()) den += v * v;
    den = std::sqrt(den);
    return den > 0.0 ? num / den : num;
}

double max_abs_difference(const Image& a, const Image& b) {
    require_same_shape(a, b, "max_abs_difference");
    double m = 0.0;
    const auto pa = a.pixels();
    const auto pb = b.pixels();
    for (std::size_t i = 0; i < pa.size(); ++i) m = std::max(m, std::abs(pa[i] - pb[i]));
    return m;
}

}  // namespace psfdeconv
