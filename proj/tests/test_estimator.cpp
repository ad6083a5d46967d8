#include "psfdeconv/bench.hpp"
#include "psfdeconv/datagen.hpp"
#include "psfdeconv/error.hpp"
#include "psfdeconv/estimator.hpp"
#include "psfdeconv/imageops.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

using namespace psfdeconv;
using namespace psfdeconv::estimator;

namespace {

std::shared_ptr<const SpectralDictionary> cells_dictionary(int n_params) {
    static std::shared_ptr<const SpectralDictionary> cache[3];
    auto& d = cache[n_params];
    if (!d) {
        d = std::make_shared<SpectralDictionary>(build_dictionary(
            DictionaryGrid::defaults_for(n_params), SpectralConfig{},
            ReferenceTexture{datagen::synthetic_cells(128, 128, 3)}));
    }
    return d;
}

std::shared_ptr<const SpectralDictionary> power_law_dictionary() {
    static auto d = std::make_shared<SpectralDictionary>(
        build_dictionary(DictionaryGrid::defaults_for(1), SpectralConfig{}));
    return d;
}

// Returns a fixed output regardless of the patch.
class FixedEstimator final : public PatchEstimator {
public:
    explicit FixedEstimator(optics::CoeffVector v) : v_(std::move(v)) {}
    int n_params() const override { return v_.size(); }
    int patch_size() const override { return 16; }
    double coeff_min() const override { return 0.0; }
    double coeff_max() const override { return 2.0; }
    mutable double seen_mean = -1.0;
    mutable double seen_max = -1.0;

protected:
    optics::CoeffVector regress(const Image& patch) const override {
        seen_mean = patch.mean();
        seen_max = patch.max();
        return v_;
    }

private:
    optics::CoeffVector v_;
};

}  // namespace

TEST(DictionaryGrid, Cardinality) {
    const auto g1 = DictionaryGrid::defaults_for(1);
    EXPECT_EQ(g1.points().size(), 41u);
    EXPECT_DOUBLE_EQ(g1.step(), 0.05);
    const auto g2 = DictionaryGrid::defaults_for(2);
    const auto p2 = g2.points();
    EXPECT_EQ(p2.size(), 441u);
    std::set<std::pair<double, double>> unique;
    for (const auto& p : p2) {
        ASSERT_EQ(p.size(), 2);
        EXPECT_TRUE(p.within(0.0, 2.0));
        unique.emplace(p[0], p[1]);
    }
    EXPECT_EQ(unique.size(), 441u);
    EXPECT_EQ(p2.front(), (optics::CoeffVector{0.0, 0.0}));
    EXPECT_EQ(p2.back(), (optics::CoeffVector{2.0, 2.0}));
}

TEST(SpectralDictionary, SignaturesAreDistinctAndDeterministic) {
    const auto& d = *power_law_dictionary();
    ASSERT_EQ(d.entries().size(), 41u);
    for (std::size_t i = 0; i < d.entries().size(); ++i)
        for (std::size_t j = i + 1; j < d.entries().size(); ++j)
            EXPECT_GT(d.distance(d.entries()[i].signature, d.entries()[j].signature), 1e-6) << i << " " << j;
    const auto again = build_dictionary(DictionaryGrid::defaults_for(1), SpectralConfig{});
    for (std::size_t i = 0; i < d.entries().size(); ++i)
        EXPECT_EQ(again.entries()[i].signature, d.entries()[i].signature);
}

TEST(SpectralDictionary, EveryEntryIsItsOwnNearestNeighbour) {
    for (const auto& dp : {power_law_dictionary(), cells_dictionary(1)}) {
        const auto& d = *dp;
        for (std::size_t i = 0; i < d.entries().size(); ++i) EXPECT_EQ(d.nearest(d.entries()[i].signature), i);
    }
}

TEST(SpectralDictionary, DistanceIgnoresOffset) {
    const auto& d = *cells_dictionary(1);
    auto shifted = d.entries()[12].signature;
    for (double& v : shifted) v += 3.7;
    EXPECT_NEAR(d.distance(shifted, d.entries()[12].signature), 0.0, 1e-12);
}

TEST(SpectralDictionary, DistanceFromInFocusGrowsWithDefocus) {
    const auto l2 = [](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0.0;
        for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
        return std::sqrt(s);
    };
    for (const auto& dp : {power_law_dictionary(), cells_dictionary(1)}) {
        const auto& e = dp->entries();
        double prev = 0.0;
        for (std::size_t k : {10u, 20u, 30u, 40u}) {  // a0 = 0.5, 1, 1.5, 2
            const double d = l2(e[0].signature, e[k].signature);
            EXPECT_GT(d, prev) << k;
            prev = d;
        }
    }
    // The mean-centred matching distance drops the overall level, which carries
    // most of the change at strong defocus; it is not monotone here.
    const auto& e = power_law_dictionary()->entries();
    EXPECT_LT(power_law_dictionary()->distance(e[0].signature, e[20].signature),
              power_law_dictionary()->distance(e[0].signature, e[10].signature));
}

TEST(DictionaryEstimator, RecoversEveryGridPointFromNoiselessReferencePatches) {
    const auto dict = cells_dictionary(1);
    const DictionaryEstimator est(dict);
    for (const auto& e : dict->entries()) {
        const auto got = est.estimate(reference_patch(*dict, e.coeffs));
        EXPECT_FALSE(got.low_confidence);
        EXPECT_EQ(got.coeffs, e.coeffs);
    }
}

TEST(DictionaryEstimator, OffGridValueLandsOnABracketingNode) {
    const auto dict = cells_dictionary(1);
    const DictionaryEstimator est(dict);
    const double a = est.estimate(reference_patch(*dict, {1.025})).coeffs[0];
    EXPECT_TRUE(std::abs(a - 1.0) < 1e-12 || std::abs(a - 1.05) < 1e-12) << a;
}

TEST(DictionaryEstimator, InvariantToPatchGainAndOffset) {
    const auto dict = cells_dictionary(1);
    const DictionaryEstimator est(dict);
    Image p = reference_patch(*dict, {0.65});
    const auto base = est.estimate(p).coeffs;
    p *= 37.0;
    p += 4.0;
    EXPECT_EQ(est.estimate(p).coeffs, base);
}

TEST(DictionaryEstimator, NoiseRobustness) {
    const auto dict = cells_dictionary(1);
    const DictionaryEstimator est(dict);
    const double step = dict->grid().step();
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> pick(0, 40);
    int within = 0;
    for (int k = 0; k < 200; ++k) {
        const optics::CoeffVector c{pick(rng) * step};
        const Image noisy = imageops::add_poisson_noise(reference_patch(*dict, c), 1000.0, 1000 + k);
        if (std::abs(est.estimate(noisy).coeffs[0] - c[0]) <= step + 1e-12) ++within;
    }
    EXPECT_GE(within, 180);
}

TEST(DictionaryEstimator, TwoParameterSelfConsistencyOnASubgrid) {
    const auto dict = cells_dictionary(2);
    ASSERT_EQ(dict->entries().size(), 441u);
    const DictionaryEstimator est(dict);
    for (std::size_t i = 0; i < dict->entries().size(); i += 37) {
        const auto& c = dict->entries()[i].coeffs;
        EXPECT_EQ(est.estimate(reference_patch(*dict, c)).coeffs, c) << i;
    }
}

TEST(DictionaryEstimator, ConstantPatchFallsBackToMidpoint) {
    const DictionaryEstimator est(power_law_dictionary());
    const auto e = est.estimate(Image(128, 128, 0.42));
    EXPECT_TRUE(e.low_confidence);
    EXPECT_EQ(e.coeffs, (optics::CoeffVector{1.0}));
}

TEST(DictionaryEstimator, RejectsWrongGeometryAndNonFinite) {
    const DictionaryEstimator est(power_law_dictionary());
    EXPECT_THROW(est.estimate(Image(64, 64, 0.0)), GeometryError);
    EXPECT_THROW(est.estimate(Image(128, 127, 0.0)), GeometryError);
    Image bad(128, 128, 0.0);
    bad(3, 3) = std::nan("");
    EXPECT_THROW(est.estimate(bad), DomainError);
}

TEST(PatchEstimator, ClampsAndNormalizesBeforeRegression) {
    FixedEstimator est({-0.5, 3.0});
    Image p(16, 16);
    for (int r = 0; r < 16; ++r)
        for (int c = 0; c < 16; ++c) p(r, c) = 10.0 + r * 0.5 + c;
    const auto e = est.estimate(p);
    EXPECT_EQ(e.coeffs, (optics::CoeffVector{0.0, 2.0}));
    EXPECT_FALSE(e.low_confidence);
    EXPECT_NEAR(est.seen_mean, 0.0, 1e-12);
    EXPECT_EQ(est.midpoint(), (optics::CoeffVector{1.0, 1.0}));
}

TEST(SpectralConfig, Validation) {
    SpectralConfig c;
    c.bins = 8;
    EXPECT_THROW(c.validate(), DomainError);
    c = {};
    c.patch_size = 64;
    EXPECT_THROW(c.validate(), GeometryError);
    c.patch_size = 65;
    EXPECT_NO_THROW(c.validate());
    c = {};
    c.low_cut = 0.5;
    c.high_cut = 0.5;
    EXPECT_THROW(c.validate(), DomainError);
    EXPECT_NO_THROW(SpectralConfig{}.validate());
}

TEST(SpectralDictionary, PowerLawHasNoReferencePatch) {
    EXPECT_THROW(reference_patch(*power_law_dictionary(), {1.0}), ContractError);
}

TEST(Spectrum, OtfSignatureFallsFasterWithDefocus) {
    const SpectralConfig c;
    const auto sharp = otf_signature({0.0}, c);
    const auto blurred = otf_signature({1.5}, c);
    ASSERT_EQ(sharp.size(), 32u);
    // Same whitening offset on both, so the difference is the OTF ratio: <= 0 everywhere
    // and clearly negative at mid frequencies.
    for (std::size_t b = 0; b < sharp.size(); ++b) EXPECT_LE(blurred[b], sharp[b] + 1e-6) << b;
    EXPECT_LT(blurred[8] - sharp[8], -1.0);
}

TEST(Spectrum, NoiseFloorAndUsableBins) {
    const auto dict = cells_dictionary(1);
    const Image clean = reference_patch(*dict, {0.3});
    const auto s0 = patch_spectrum(clean, dict->config());
    const auto s1 = patch_spectrum(imageops::add_poisson_noise(clean, 50.0, 4), dict->config());
    EXPECT_GT(s1.noise_floor, s0.noise_floor);
    const auto count = [](const std::vector<bool>& u) { return std::count(u.begin(), u.end(), true); };
    EXPECT_LE(count(s1.usable), count(s0.usable));
    EXPECT_GT(count(s1.usable), 0);
}
