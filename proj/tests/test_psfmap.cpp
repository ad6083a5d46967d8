#include "psfdeconv/datagen.hpp"
#include "psfdeconv/error.hpp"
#include "psfdeconv/estimator.hpp"
#include "psfdeconv/io.hpp"
#include "psfdeconv/psfmap.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <random>

using namespace psfdeconv;
using namespace psfdeconv::psfmap;
namespace fs = std::filesystem;

namespace {

std::vector<optics::CoeffVector> random_cells(int n, int params, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 2.0);
    std::vector<optics::CoeffVector> out;
    for (int k = 0; k < n; ++k) {
        std::vector<double> v;
        for (int p = 0; p < params; ++p) v.push_back(u(rng));
        out.emplace_back(std::move(v));
    }
    return out;
}

PsfMap scalar_map(int rows, int cols, const std::vector<double>& values, std::vector<bool> low = {}) {
    std::vector<optics::CoeffVector> cells;
    for (double v : values) cells.push_back(optics::CoeffVector{v});
    // window 10, stride 10
    return PsfMap(cols * 10, rows * 10, 10, 10, std::move(cells), std::move(low));
}

Image tile_periodically(const Image& tile, int width, int height) {
    Image out(width, height);
    for (int r = 0; r < height; ++r)
        for (int c = 0; c < width; ++c) out(r, c) = tile(r % tile.height(), c % tile.width());
    return out;
}

// Records the top-left pixel value of every patch it sees.
class ProbeEstimator final : public estimator::PatchEstimator {
public:
    int n_params() const override { return 2; }
    int patch_size() const override { return 8; }
    double coeff_min() const override { return -1e9; }
    double coeff_max() const override { return 1e9; }

protected:
    optics::CoeffVector regress(const Image& patch) const override {
        // Images below encode (row, col) of the pixel; the mean is removed, so
        // send back differences that survive that.
        return {patch(0, 1) - patch(0, 0), patch(1, 0) - patch(0, 0)};
    }
};

}  // namespace

TEST(GridCount, Examples) {
    EXPECT_EQ(grid_count(1024, 128, 64), 15);
    EXPECT_EQ(grid_count(252, 126, 126), 2);
    EXPECT_EQ(grid_count(128, 128, 64), 1);
    EXPECT_EQ(grid_count(200, 128, 64), 2);
    EXPECT_THROW(grid_count(100, 128, 64), GeometryError);
    EXPECT_THROW(grid_count(100, 0, 64), GeometryError);
    EXPECT_THROW(grid_count(100, 10, 0), GeometryError);
}

TEST(PsfMap, ConstructionAndAccess) {
    const auto m = PsfMap::uniform(1024, 1024, 128, 64, {0.3, 0.4});
    EXPECT_EQ(m.grid_rows(), 15);
    EXPECT_EQ(m.grid_cols(), 15);
    EXPECT_EQ(m.cell_count(), 225);
    EXPECT_EQ(m.n_params(), 2);
    EXPECT_EQ(m.cell_box(2, 3), (Box{128, 192, 256, 320}));
    EXPECT_THROW(m.at(15, 0), GeometryError);
    EXPECT_THROW(PsfMap(256, 256, 128, 64, random_cells(8, 1, 1)), GeometryError);
    auto mixed = random_cells(9, 1, 1);
    mixed[4] = optics::CoeffVector{0.1, 0.2};
    EXPECT_THROW(PsfMap(256, 256, 128, 64, mixed), ContractError);
}

TEST(PsfMap, TransposeAndParameterGrid) {
    const PsfMap m(384, 256, 128, 64, random_cells(3 * 5, 2, 4));
    const PsfMap t = m.transpose();
    EXPECT_EQ(t.grid_rows(), 5);
    EXPECT_EQ(t.grid_cols(), 3);
    EXPECT_EQ(t.image_width(), 256);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 5; ++j) EXPECT_EQ(t.at(j, i), m.at(i, j));
    EXPECT_EQ(t.transpose(), m);
    const Image g = m.parameter_grid(1);
    EXPECT_EQ(g.width(), 5);
    EXPECT_EQ(g.height(), 3);
    EXPECT_EQ(g(2, 4), m.at(2, 4)[1]);
    EXPECT_THROW(m.parameter_grid(2), DomainError);
}

TEST(EstimateMap, VisitsWindowsInRowMajorOrder) {
    // pixel value = 1000 * row + col: horizontal difference 1, vertical 1000, so patch
    // placement is visible only through cell count and the crop geometry.
    Image img(40, 24);
    for (int r = 0; r < 24; ++r)
        for (int c = 0; c < 40; ++c) img(r, c) = 1000.0 * r + c + (r * 7 + c * 3) % 5 * 0.001 * (c + 1);
    const ProbeEstimator est;
    const auto m = estimate_map(img, est, 8, 8, 3);
    ASSERT_EQ(m.grid_rows(), 3);
    ASSERT_EQ(m.grid_cols(), 5);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 5; ++j) {
            const int r0 = 8 * i, c0 = 8 * j;
            EXPECT_NEAR(m.at(i, j)[0], img(r0, c0 + 1) - img(r0, c0), 1e-9);
            EXPECT_NEAR(m.at(i, j)[1], img(r0 + 1, c0) - img(r0, c0), 1e-9);
        }
    EXPECT_THROW(estimate_map(img, est, 16, 8), GeometryError);
}

TEST(EstimateMap, UniformBlurGivesUniformMap) {
    auto dict = std::make_shared<estimator::SpectralDictionary>(estimator::build_dictionary(
        estimator::DictionaryGrid::defaults_for(1), estimator::SpectralConfig{},
        estimator::ReferenceTexture{datagen::synthetic_cells(128, 128, 3)}));
    const estimator::DictionaryEstimator est(dict);
    for (double a : {0.25, 1.1, 1.8}) {
        const Image blurred = tile_periodically(estimator::reference_patch(*dict, {a}), 384, 384);
        const auto m = estimate_map(blurred, est, 128, 128);
        ASSERT_EQ(m.cell_count(), 9);
        for (const auto& c : m.cells()) EXPECT_NEAR(c[0], a, 1e-12);
        const auto half = estimate_map(blurred, est, 128, 64);
        ASSERT_EQ(half.cell_count(), 25);
        // Shifted windows see another phase of the period; windows one period apart see
        // the same pixels.
        for (int i = 0; i + 2 < 5; ++i)
            for (int j = 0; j + 2 < 5; ++j) {
                EXPECT_EQ(half.at(i, j), half.at(i + 2, j));
                EXPECT_EQ(half.at(i, j), half.at(i, j + 2));
            }
        EXPECT_EQ(half.at(0, 0)[0], m.at(0, 0)[0]);
    }
}

TEST(SmoothMap, RadiusZeroIsIdentity) {
    const PsfMap m(640, 640, 128, 64, random_cells(81, 2, 3));
    EXPECT_EQ(smooth_map(m, 0), m);
    EXPECT_THROW(smooth_map(m, -1), DomainError);
}

TEST(SmoothMap, ConstantMapIsFixed) {
    const auto m = PsfMap::uniform(640, 640, 128, 64, {0.7, 1.3});
    EXPECT_EQ(smooth_map(m, 1), m);
    EXPECT_EQ(smooth_map(m, 3), m);
}

TEST(SmoothMap, RemovesIsolatedOutlier) {
    std::vector<double> v(25, 0.5);
    v[12] = 1.9;
    const auto s = smooth_map(scalar_map(5, 5, v), 1);
    for (const auto& c : s.cells()) EXPECT_EQ(c[0], 0.5);
}

TEST(SmoothMap, EdgeReplicatedMedianOracle) {
    const int rows = 4, cols = 6;
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0, 2);
    std::vector<double> v(rows * cols);
    for (double& x : v) x = u(rng);
    const auto s = smooth_map(scalar_map(rows, cols, v), 1);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) {
            std::vector<double> w;
            for (int di = -1; di <= 1; ++di)
                for (int dj = -1; dj <= 1; ++dj)
                    w.push_back(v[std::clamp(i + di, 0, rows - 1) * cols + std::clamp(j + dj, 0, cols - 1)]);
            std::sort(w.begin(), w.end());
            EXPECT_EQ(s.at(i, j)[0], w[4]);
        }
}

TEST(SmoothMap, CommutesWithTranspose) {
    const PsfMap m(640, 384, 128, 64, random_cells(5 * 9, 2, 12));
    EXPECT_EQ(smooth_map(m.transpose(), 1), smooth_map(m, 1).transpose());
    EXPECT_EQ(smooth_map(m.transpose(), 2), smooth_map(m, 2).transpose());
}

TEST(SmoothMap, LowConfidenceCellsDoNotVote) {
    std::vector<double> v(9, 0.4);
    std::vector<bool> low(9, false);
    v[4] = 1.0;  // midpoint fallback
    low[4] = true;
    v[0] = 0.6;
    const auto s = smooth_map(scalar_map(3, 3, v, low), 1);
    EXPECT_EQ(s.at(1, 1)[0], 0.4);
    EXPECT_FALSE(s.low_confidence(1, 1));

    // Nobody confident: values stay, flags stay.
    const auto all_low = scalar_map(2, 2, {1.0, 1.0, 1.0, 1.0}, std::vector<bool>(4, true));
    const auto t = smooth_map(all_low, 1);
    EXPECT_EQ(t.cells(), all_low.cells());
    EXPECT_TRUE(t.low_confidence(0, 0));
}

TEST(RealizeKernels, RowMajorAndShared) {
    const PsfMap m(256, 256, 128, 128, {{0.0}, {1.0}, {0.0}, {1.5}});
    const auto k = realize_kernels(m, 31);
    ASSERT_EQ(k.size(), 4u);
    EXPECT_EQ(k[0].size(), 31);
    EXPECT_EQ(k[0], k[2]);
    EXPECT_EQ(k[1], optics::synthesize_psf({1.0}, {}, 31));
    EXPECT_EQ(k[3], optics::synthesize_psf({1.5}, {}, 31));
    EXPECT_FALSE(k[1] == k[3]);
}

TEST(RealizeKernels, ZeroMapAndSmoothingIdentity) {
    const auto zero = PsfMap::uniform(384, 384, 128, 128, {0.0, 0.0});
    const auto k = realize_kernels(zero, 63);
    ASSERT_EQ(k.size(), 9u);
    for (const auto& h : k) EXPECT_EQ(h, optics::synthesize_psf({0.0, 0.0}, {}, 63));
    const PsfMap m(384, 384, 128, 128, random_cells(9, 1, 30));
    EXPECT_EQ(realize_kernels(smooth_map(m, 0), 31), realize_kernels(m, 31));
}

TEST(MapJson, RoundTrip) {
    const PsfMap m(1024, 768, 128, 64, random_cells(11 * 15, 2, 21));
    EXPECT_EQ(from_json(to_json(m)), m);
    const fs::path p = fs::temp_directory_path() / "psfdeconv_test_map.json";
    write_map(p, m);
    EXPECT_EQ(read_map(p), m);
    EXPECT_THROW(read_map("/nonexistent/map.json"), IoError);
    EXPECT_THROW(from_json("{"), IoError);
    EXPECT_THROW(from_json(R"({"image_width":256,"image_height":256,"window":128,"stride":128,"n_params":1,"cells":[[[0.1],[0.2]]]})"),
                 IoError);
    EXPECT_THROW(from_json(R"({"image_width":256,"image_height":256,"window":128,"stride":128,"n_params":1,"cells":[[[0.1],[0.2]],[[0.1],[0.2,0.3]]]})"),
                 IoError);
}

TEST(MapPng, FalseColorEndpointsAndPreview) {
    EXPECT_EQ(false_color(0.0), (io::Rgb{68, 1, 84}));
    EXPECT_EQ(false_color(1.0), (io::Rgb{253, 231, 37}));
    EXPECT_EQ(false_color(-3.0), false_color(0.0));
    EXPECT_EQ(false_color(7.0), false_color(1.0));
    const PsfMap m(256, 256, 128, 128, {{0.0}, {2.0}, {2.0}, {0.0}});
    const fs::path p = fs::temp_directory_path() / "psfdeconv_test_map.png";
    write_map_png(p, m, 0);
    const Image g = io::read_png(p);
    EXPECT_EQ(g.width(), 256);
    EXPECT_EQ(g.height(), 256);
    EXPECT_EQ(g(10, 10), g(200, 200));
    EXPECT_NE(g(10, 10), g(10, 200));
}
