#include "psfdeconv/datagen.hpp"
#include "psfdeconv/error.hpp"
#include "psfdeconv/imageops.hpp"
#include "psfdeconv/io.hpp"
#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace psfdeconv;
using namespace psfdeconv::datagen;
namespace fs = std::filesystem;

namespace {

DatasetConfig small_config() {
    DatasetConfig cfg;
    cfg.patch_size = 32;
    cfg.psf_size = 31;
    cfg.pupil.size = 63;
    cfg.count = 10;
    cfg.rng_seed = 5;
    return cfg;
}

// Crop box of a patch after rotating the whole source by q quarter turns.
Box rotated_box(int row, int col, int p, int w, int h, int q) {
    switch (((q % 4) + 4) % 4) {
        case 1: return {w - col - p, row, w - col, row + p};
        case 2: return {h - row - p, w - col - p, h - row, w - col};
        case 3: return {col, h - row - p, col + p, h - row};
        default: return {row, col, row + p, col + p};
    }
}

}  // namespace

TEST(Degrade, SharperKernelGivesHigherSnr) {
    const Image src = synthetic_cells(160, 160, 1);
    DatasetConfig cfg;
    cfg.photons_at_max = 1e7;
    const Image sharp = degrade(src, optics::CoeffVector{0.0}, cfg, 3);
    const Image blurred = degrade(src, optics::CoeffVector{2.0}, cfg, 3);
    const double s0 = imageops::snr(src, sharp);
    EXPECT_TRUE(std::isfinite(s0));
    EXPECT_GT(s0, imageops::snr(src, blurred));
    EXPECT_TRUE(sharp.same_shape(src));
}

TEST(Degrade, DeterministicUnderSeed) {
    const Image src = synthetic_cells(140, 130, 2);
    const DatasetConfig cfg;
    EXPECT_EQ(degrade(src, optics::CoeffVector{1.0}, cfg, 7), degrade(src, optics::CoeffVector{1.0}, cfg, 7));
}

TEST(Degrade, ConstantSourceKeepsItsValueAwayFromTheBorder) {
    DatasetConfig cfg;
    cfg.photons_at_max = 0.0;
    const Image out = degrade(Image(256, 256, 0.6), optics::CoeffVector{1.2}, cfg);
    // Zero padding darkens only within one kernel radius of the edge.
    const Image inner = out.crop(63, 63, 130, 130);
    EXPECT_LT(max_abs_difference(inner, Image(130, 130, 0.6)), 1e-6);
}

TEST(Degrade, UndersizedSourceThrows) {
    EXPECT_THROW(degrade(Image(100, 200, 0.5), optics::CoeffVector{0.0}, DatasetConfig{}), GeometryError);
}

TEST(AcceptPatch, Filters) {
    const DatasetConfig cfg;
    EXPECT_FALSE(accept_patch(Image(128, 128, 0.3), cfg));
    EXPECT_EQ(classify_patch(Image(128, 128, 0.3), cfg), PatchVerdict::low_variance);

    Image sat(10, 10, 0.0);
    for (int i = 0; i < 60; ++i) sat.pixels()[static_cast<std::size_t>(i)] = 1.0;
    EXPECT_NEAR(white_ratio(sat), 0.6, 1e-15);
    EXPECT_FALSE(accept_patch(sat, cfg));
    EXPECT_EQ(classify_patch(sat, cfg), PatchVerdict::saturated);

    const Image cells = synthetic_cells(256, 256, 4).crop(64, 64, 128, 128);
    EXPECT_TRUE(accept_patch(cells, cfg));
}

TEST(GenerateDataset, ContractOnSmallRun) {
    DatasetConfig cfg;
    cfg.count = 10;
    cfg.rng_seed = 3;
    cfg.threads = 1;
    const auto pairs = generate_dataset({synthetic_cells(256, 256, 9)}, cfg);
    ASSERT_EQ(pairs.size(), 10u);
    for (const auto& p : pairs) {
        EXPECT_EQ(p.patch.width(), 128);
        EXPECT_EQ(p.patch.height(), 128);
        EXPECT_LE(std::abs(p.patch.mean()), 1e-6);
        EXPECT_GE(p.patch.variance(), cfg.variance_min);
        EXPECT_EQ(p.coeffs.size(), 1);
        EXPECT_TRUE(p.coeffs.within(cfg.coeff_min, cfg.coeff_max));
    }
}

TEST(GenerateDataset, RotationCommutesWithDegradation) {
    DatasetConfig cfg = small_config();
    cfg.photons_at_max = 0.0;
    cfg.rotations = {90, 180, 270};
    cfg.count = 6;
    const std::vector<Image> sources{synthetic_cells(72, 56, 3)};
    const auto pairs = generate_dataset(sources, cfg);
    for (const auto& p : pairs) {
        const int q = p.rotation_degrees / 90;
        const optics::Psf h = optics::synthesize_psf(p.coeffs, cfg.pupil, cfg.psf_size);
        const Image rotated = imageops::fft_convolve(sources[0].rotate90(q), optics::Psf(h.kernel().rotate90(q)));
        const Image want = rotated.crop(rotated_box(p.row, p.col, cfg.patch_size, 72, 56, q));
        EXPECT_LT(max_abs_difference(noiseless_patch(sources, p, cfg), want), 1e-9) << "rotation " << q;
        EXPECT_LT(max_abs_difference(p.patch, imageops::normalize_patch(want)), 1e-9);
    }
}

TEST(GenerateDataset, DeterministicAndIndependentOfThreads) {
    DatasetConfig cfg = small_config();
    cfg.count = 24;
    const std::vector<Image> sources{synthetic_cells(80, 80, 1), synthetic_cells(64, 96, 2)};
    cfg.threads = 1;
    const auto a = generate_dataset(sources, cfg);
    cfg.threads = 3;
    const auto b = generate_dataset(sources, cfg);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
        EXPECT_EQ(a[k].patch, b[k].patch);
        EXPECT_EQ(a[k].coeffs, b[k].coeffs);
    }
    cfg.rng_seed = 6;
    const auto c = generate_dataset(sources, cfg);
    int same = 0;
    for (std::size_t k = 0; k < a.size(); ++k) same += a[k].coeffs == c[k].coeffs;
    EXPECT_EQ(same, 0);
}

TEST(GenerateDataset, CoefficientMarginalsAreUniform) {
    DatasetConfig cfg;
    cfg.patch_size = 8;
    cfg.psf_size = 7;
    cfg.pupil.size = 15;
    cfg.n_params = 2;
    cfg.count = 10000;
    cfg.rng_seed = 17;
    cfg.photons_at_max = 0.0;
    cfg.variance_min = 0.0;
    cfg.white_ratio_max = 1.0;
    std::vector<double> sum(2, 0.0);
    generate_dataset({synthetic_cells(40, 40, 5)}, cfg, [&](TrainingPair&& p) {
        for (int n = 0; n < 2; ++n) sum[static_cast<std::size_t>(n)] += p.coeffs[n];
    });
    // Uniform on [0, 2]: mean 1, sd 2/sqrt(12).
    const double se = 2.0 / std::sqrt(12.0) / std::sqrt(10000.0);
    for (double s : sum) EXPECT_LT(std::abs(s / 10000.0 - 1.0), 3 * se);
}

TEST(GenerateDataset, ExhaustionNamesTheFilter) {
    DatasetConfig cfg = small_config();
    cfg.count = 2;
    // Noise, or the zero-padded border of a flat non-zero source, would add variance.
    cfg.photons_at_max = 0.0;
    try {
        generate_dataset({Image(64, 64, 0.0)}, cfg);
        FAIL() << "expected exhaustion";
    } catch (const ExhaustionError& e) {
        EXPECT_NE(std::string(e.what()).find("variance"), std::string::npos) << e.what();
    }
}

TEST(GenerateDataset, ConfigValidation) {
    DatasetConfig cfg = small_config();
    cfg.rotations = {45};
    EXPECT_THROW(generate_dataset({synthetic_cells(64, 64, 1)}, cfg), DomainError);
    cfg = small_config();
    EXPECT_THROW(generate_dataset({}, cfg), DomainError);
    EXPECT_THROW(generate_dataset({Image(16, 16, 1.0)}, cfg), GeometryError);
}

TEST(Manifest, RoundTrip) {
    DatasetConfig cfg = small_config();
    cfg.n_params = 2;
    cfg.count = 7;
    const auto pairs = generate_dataset({synthetic_cells(96, 96, 8)}, cfg);
    const fs::path root = fs::temp_directory_path() / "psfdeconv_test_manifest";
    fs::remove_all(root);
    {
        DatasetWriter w(root, 2);
        for (const auto& p : pairs) w.add(p);
        EXPECT_EQ(w.written(), 7);
    }
    std::ifstream f(root / "manifest.csv");
    std::string header;
    std::getline(f, header);
    EXPECT_EQ(header, "index,filename,scale,offset,a_0,a_1");

    const auto back = read_dataset(root);
    ASSERT_EQ(back.size(), pairs.size());
    for (std::size_t k = 0; k < back.size(); ++k) {
        EXPECT_EQ(back[k].coeffs, pairs[k].coeffs);
        const double range = pairs[k].patch.max() - pairs[k].patch.min();
        EXPECT_LE(max_abs_difference(back[k].patch, pairs[k].patch), range / 65535.0);
    }
    const auto rows = read_manifest(root);
    EXPECT_EQ(rows[3].filename, "patches/3.png");
    EXPECT_TRUE(fs::exists(root / rows[3].filename));
}

TEST(Manifest, WriterRejectsWrongArity) {
    const fs::path root = fs::temp_directory_path() / "psfdeconv_test_manifest_arity";
    fs::remove_all(root);
    DatasetWriter w(root, 2);
    TrainingPair p;
    p.patch = Image(4, 4, 0.0);
    p.coeffs = optics::CoeffVector{1.0};
    EXPECT_THROW(w.add(p), ContractError);
}

TEST(SyntheticCells, RangeAndDeterminism) {
    const Image a = synthetic_cells(100, 80, 3);
    EXPECT_EQ(a.min(), 0.0);
    EXPECT_EQ(a.max(), 1.0);
    EXPECT_EQ(a, synthetic_cells(100, 80, 3));
    EXPECT_NE(a, synthetic_cells(100, 80, 4));
}
