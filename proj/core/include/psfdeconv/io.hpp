#pragma once

#include "psfdeconv/image.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace psfdeconv::io {

// PSFRAW01: 8-byte magic, uint32 LE width, uint32 LE height, then
// width*height IEEE-754 float64 LE values in row-major order.
void write_raw(const std::filesystem::path& path, const Image& image);
Image read_raw(const std::filesystem::path& path);

// Grayscale PNG (8 or 16 bit; palette/RGB inputs are converted to gray).
// Values are mapped to [0, 1].
Image read_png(const std::filesystem::path& path);

struct Quantization {
    double scale = 1.0;   // value = offset + scale * code
    double offset = 0.0;
};

// 16-bit grayscale PNG. The image is affine-rescaled so [lo, hi] spans
// [0, 65535]; values outside are clipped. Returns the mapping back.
Quantization write_png16(const std::filesystem::path& path, const Image& image, double lo,
                         double hi);
// Rescales the image's own [min, max] to the full 16-bit range.
Quantization write_png16(const std::filesystem::path& path, const Image& image);

using Rgb = std::array<std::uint8_t, 3>;
void write_png_rgb8(const std::filesystem::path& path, int width, int height,
                    const std::vector<Rgb>& pixels);

// Dispatches on extension: ".png" or PSFRAW01 (".raw", ".psfraw").
Image read_image(const std::filesystem::path& path);
// ".png" writes a min/max rescaled 16-bit preview; anything else PSFRAW01.
void write_image(const std::filesystem::path& path, const Image& image);

}  // namespace psfdeconv::io
