#include "psfdeconv/io.hpp"

#include "psfdeconv/error.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>

namespace psfdeconv::io {

namespace {

constexpr char kRawMagic[8] = {'P', 'S', 'F', 'R', 'A', 'W', '0', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(const unsigned char* b) {
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

struct FileCloser {
    void operator()(std::FILE* f) const noexcept {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) throw IoError("cannot open '" + path.string() + "'");
    return f;
}

[[noreturn]] void png_error_handler(png_structp, png_const_charp msg) {
    throw IoError(std::string("PNG error: ") + msg);
}

void png_warning_handler(png_structp, png_const_charp) {}

void write_png(const std::filesystem::path& path, int width, int height, int bit_depth,
               int color_type, const std::vector<png_bytep>& rows) {
    FilePtr f = open_file(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_handler,
                                              png_warning_handler);
    png_infop info = png_create_info_struct(png);
    struct Guard {
        png_structp* p;
        png_infop* i;
        ~Guard() { png_destroy_write_struct(p, i); }
    } guard{&png, &info};
    png_init_io(png, f.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
                 bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    if (bit_depth == 16 && std::endian::native == std::endian::little) png_set_swap(png);
    png_write_image(png, const_cast<png_bytepp>(rows.data()));
    png_write_end(png, nullptr);
}

}  // namespace

void write_raw(const std::filesystem::path& path, const Image& image) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    os.write(kRawMagic, sizeof kRawMagic);
    put_u32(os, static_cast<std::uint32_t>(image.width()));
    put_u32(os, static_cast<std::uint32_t>(image.height()));
    for (double v : image.pixels()) {
        std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
        os.write(reinterpret_cast<const char*>(b), 8);
    }
    if (!os) throw IoError("write to '" + path.string() + "' failed");
}

Image read_raw(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path.string() + "'");
    char magic[8];
    unsigned char dims[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kRawMagic, 8) != 0) {
        throw IoError("'" + path.string() + "' is not a PSFRAW01 raster");
    }
    if (!is.read(reinterpret_cast<char*>(dims), 8)) throw IoError("truncated PSFRAW01 header");
    const std::uint32_t width = get_u32(dims);
    const std::uint32_t height = get_u32(dims + 4);
    if (width == 0 || height == 0 || width > (1u << 16) || height > (1u << 16)) {
        throw IoError("implausible PSFRAW01 dimensions in '" + path.string() + "'");
    }
    std::vector<double> data(static_cast<std::size_t>(width) * height);
    for (double& v : data) {
        unsigned char b[8];
        if (!is.read(reinterpret_cast<char*>(b), 8)) throw IoError("truncated PSFRAW01 payload");
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        v = std::bit_cast<double>(bits);
    }
    return Image(static_cast<int>(width), static_cast<int>(height), std::move(data));
}

Image read_png(const std::filesystem::path& path) {
    FilePtr f = open_file(path, "rb");
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
        throw IoError("'" + path.string() + "' is not a PNG file");
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_handler,
                                             png_warning_handler);
    png_infop info = png_create_info_struct(png);
    struct Guard {
        png_structp* p;
        png_infop* i;
        ~Guard() { png_destroy_read_struct(p, i, nullptr); }
    } guard{&png, &info};
    png_init_io(png, f.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA ||
        color == PNG_COLOR_TYPE_PALETTE) {
        png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    }
    if (depth == 16 && std::endian::native == std::endian::little) png_set_swap(png);
    png_read_update_info(png, info);

    const int width = static_cast<int>(png_get_image_width(png, info));
    const int height = static_cast<int>(png_get_image_height(png, info));
    const int out_depth = png_get_bit_depth(png, info);
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    std::vector<unsigned char> buffer(rowbytes * static_cast<std::size_t>(height));
    std::vector<png_bytep> rows(static_cast<std::size_t>(height));
    for (int r = 0; r < height; ++r) rows[static_cast<std::size_t>(r)] = &buffer[rowbytes * r];
    png_read_image(png, rows.data());

    Image out(width, height);
    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
            if (out_depth == 16) {
                std::uint16_t v;
                std::memcpy(&v, rows[static_cast<std::size_t>(r)] + 2 * c, 2);
                out(r, c) = v / 65535.0;
            } else {
                out(r, c) = rows[static_cast<std::size_t>(r)][c] / 255.0;
            }
        }
    }
    return out;
}

Quantization write_png16(const std::filesystem::path& path, const Image& image, double lo,
                         double hi) {
    Quantization q;
    q.offset = lo;
    q.scale = hi > lo ? (hi - lo) / 65535.0 : 1.0;
    std::vector<std::uint16_t> codes(image.size());
    const auto px = image.pixels();
    for (std::size_t i = 0; i < px.size(); ++i) {
        const double code = std::round((px[i] - q.offset) / q.scale);
        codes[i] = static_cast<std::uint16_t>(std::clamp(code, 0.0, 65535.0));
    }
    std::vector<png_bytep> rows(static_cast<std::size_t>(image.height()));
    for (int r = 0; r < image.height(); ++r) {
        rows[static_cast<std::size_t>(r)] =
            reinterpret_cast<png_bytep>(&codes[static_cast<std::size_t>(r) * image.width()]);
    }
    write_png(path, image.width(), image.height(), 16, PNG_COLOR_TYPE_GRAY, rows);
    return q;
}

Quantization write_png16(const std::filesystem::path& path, const Image& image) {
    return write_png16(path, image, image.min(), image.max());
}

void write_png_rgb8(const std::filesystem::path& path, int width, int height,
                    const std::vector<Rgb>& pixels) {
    if (pixels.size() != static_cast<std::size_t>(width) * height) {
        throw GeometryError("RGB buffer does not match image dimensions");
    }
    std::vector<png_bytep> rows(static_cast<std::size_t>(height));
    for (int r = 0; r < height; ++r) {
        rows[static_cast<std::size_t>(r)] = const_cast<png_bytep>(
            pixels[static_cast<std::size_t>(r) * width].data());
    }
    write_png(path, width, height, 8, PNG_COLOR_TYPE_RGB, rows);
}

Image read_image(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw IoError("no such file '" + path.string() + "'");
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") return read_png(path);
    return read_raw(path);
}

void write_image(const std::filesystem::path& path, const Image& image) {
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") {
        write_png16(path, image);
    } else {
        write_raw(path, image);
    }
}

}  // namespace psfdeconv::io
