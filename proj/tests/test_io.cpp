#include "psfdeconv/error.hpp"
#include "psfdeconv/io.hpp"
#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

using namespace psfdeconv;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "psfdeconv_test_io";
    fs::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST(Raw, RoundTripIsBitExact) {
    Image x = oracle::random_image(13, 7, 1, -5, 5);
    x(0, 0) = 1e-300;
    x(6, 12) = -0.0;
    const auto p = scratch("a.psfraw");
    io::write_raw(p, x);
    EXPECT_EQ(io::read_raw(p), x);
    EXPECT_EQ(io::read_image(p), x);
}

TEST(Raw, LayoutIsMagicDimsThenRowMajorDoubles) {
    Image x(3, 2);
    for (int i = 0; i < 6; ++i) x.pixels()[static_cast<std::size_t>(i)] = i + 0.5;
    const auto p = scratch("layout.psfraw");
    io::write_raw(p, x);
    std::ifstream f(p, std::ios::binary);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), {});
    ASSERT_EQ(bytes.size(), 8u + 8u + 6u * 8u);
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 8), "PSFRAW01");
    auto u32 = [&](std::size_t o) {
        return bytes[o] | bytes[o + 1] << 8 | bytes[o + 2] << 16 | static_cast<unsigned>(bytes[o + 3]) << 24;
    };
    EXPECT_EQ(u32(8), 3u);
    EXPECT_EQ(u32(12), 2u);
    for (int i = 0; i < 6; ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) bits |= std::uint64_t(bytes[16 + 8 * i + b]) << (8 * b);
        double v;
        std::memcpy(&v, &bits, 8);
        EXPECT_EQ(v, i + 0.5);
    }
}

TEST(Raw, RejectsWrongMagicAndTruncation) {
    const auto p = scratch("bad.psfraw");
    {
        std::ofstream f(p, std::ios::binary);
        f << "PSFRAW02xxxxxxxx";
    }
    EXPECT_THROW(io::read_raw(p), IoError);
    io::write_raw(p, Image(4, 4, 1.0));
    fs::resize_file(p, fs::file_size(p) - 4);
    EXPECT_THROW(io::read_raw(p), IoError);
    EXPECT_THROW(io::read_image(scratch("nope.psfraw")), IoError);
}

TEST(Png16, RoundTripWithinQuantization) {
    const Image x = oracle::random_image(31, 17, 2, -3, 4);
    const auto p = scratch("q.png");
    const auto q = io::write_png16(p, x);
    const Image back = io::read_png(p);
    ASSERT_TRUE(back.same_shape(x));
    const double range = x.max() - x.min();
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = q.offset + q.scale * back.pixels()[i] * 65535.0;
        EXPECT_LE(std::abs(v - x.pixels()[i]), 0.5 * range / 65535.0 + 1e-12);
    }
}

TEST(Png16, ExplicitRangeClips) {
    Image x(2, 1);
    x(0, 0) = -1.0;
    x(0, 1) = 2.0;
    const auto p = scratch("clip.png");
    io::write_png16(p, x, 0.0, 1.0);
    const Image back = io::read_png(p);
    EXPECT_EQ(back(0, 0), 0.0);
    EXPECT_EQ(back(0, 1), 1.0);
}

TEST(Png8, RgbReadsAsGray) {
    const auto p = scratch("rgb.png");
    std::vector<io::Rgb> px{{0, 0, 0}, {255, 255, 255}, {51, 51, 51}, {102, 102, 102}};
    io::write_png_rgb8(p, 2, 2, px);
    const Image g = io::read_png(p);
    EXPECT_NEAR(g(0, 0), 0.0, 1e-12);
    EXPECT_NEAR(g(0, 1), 1.0, 1e-12);
    EXPECT_NEAR(g(1, 0), 0.2, 1e-3);
    EXPECT_NEAR(g(1, 1), 0.4, 1e-3);
}

TEST(Png, NotAPngThrows) {
    const auto p = scratch("fake.png");
    {
        std::ofstream f(p);
        f << "hello";
    }
    EXPECT_THROW(io::read_png(p), IoError);
}
