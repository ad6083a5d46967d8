#pragma once

#include "psfdeconv/image.hpp"
#include "psfdeconv/optics.hpp"

#include <filesystem>
#include <memory>
#include <variant>
#include <vector>

namespace psfdeconv::estimator {

struct Estimate {
    optics::CoeffVector coeffs;
    // Set when the patch carried no usable signal and `coeffs` is the
    // range-midpoint fallback.
    bool low_confidence = false;
};

// Regresses PSF coefficients from a single image patch. estimate() is const
// and reentrant; implementations must be safe to call from many threads.
class PatchEstimator {
public:
    virtual ~PatchEstimator() = default;

    virtual int n_params() const = 0;
    virtual int patch_size() const = 0;
    virtual double coeff_min() const = 0;
    virtual double coeff_max() const = 0;

    // Checks geometry, removes the patch mean, handles signal-free patches
    // and clamps the backend output to [coeff_min, coeff_max].
    Estimate estimate(const Image& patch) const;

    optics::CoeffVector midpoint() const;

protected:
    // `patch` is zero-mean with the configured size.
    virtual optics::CoeffVector regress(const Image& patch) const = 0;
};

// Regular grid over the coefficient box, one axis per parameter.
struct DictionaryGrid {
    int n_params = 1;
    double coeff_min = 0.0;
    double coeff_max = 2.0;
    int points_per_axis = 41;

    static DictionaryGrid defaults_for(int n_params);
    double step() const noexcept;
    std::vector<optics::CoeffVector> points() const;
};

struct SpectralConfig {
    int patch_size = 128;
    int bins = 32;
    double whitening_exponent = 2.0;
    // Fractions of the bins excluded at the low and high frequency ends.
    double low_cut = 0.0;
    double high_cut = 0.1;
    // Bins whose power is below noise_margin times the noise floor are
    // left out of the match.
    double noise_margin = 3.0;
    // Tukey taper applied before the transform: the outer taper_fraction of
    // each axis rolls off with a raised cosine (1 = Hann, 0 = none).
    double taper_fraction = 0.5;
    optics::PupilGrid pupil{};
    int psf_size = 127;
    int astigmatism_noll = 5;

    void validate() const;
};

// Natural-image 1/f^gamma prior; entries are pure OTF signatures.
struct PowerLawPrior {};

// A patch_size x patch_size tile treated as one period of a periodic
// specimen. Entries are signatures of the tile circularly blurred by each
// grid PSF, so any crop of a uniformly blurred tiling reproduces them.
struct ReferenceTexture {
    Image tile;
};

using SpectrumPrior = std::variant<PowerLawPrior, ReferenceTexture>;

struct DictionaryEntry {
    optics::CoeffVector coeffs;
    std::vector<double> signature;
};

// Binned power spectrum of an observed patch. Frequencies beyond 0.5
// cycles/pixel lie outside the OTF support and carry only noise, so their
// mean power is the noise floor. Each bin holds
// log(mean power - floor) + whitening_exponent * log(mean f); bins whose
// mean power is below config.noise_margin * floor are marked unusable.
struct PatchSpectrum {
    std::vector<double> values;
    std::vector<bool> usable;
    double noise_floor = 0.0;
};

class SpectralDictionary {
public:
    SpectralDictionary(DictionaryGrid grid, SpectralConfig config, SpectrumPrior prior,
                       std::vector<DictionaryEntry> entries);

    const DictionaryGrid& grid() const noexcept { return grid_; }
    const SpectralConfig& config() const noexcept { return config_; }
    const SpectrumPrior& prior() const noexcept { return prior_; }
    const std::vector<DictionaryEntry>& entries() const noexcept { return entries_; }
    int bins() const noexcept { return config_.bins; }
    // Bin range [first, last) used for matching.
    int first_bin() const noexcept;
    int last_bin() const noexcept;

    // Index of the entry nearest to `signature` (mean-centred L2 over the
    // matching band); ties resolve to the lowest index.
    std::size_t nearest(const std::vector<double>& signature) const;
    // Same, restricted to the band bins flagged in `usable`.
    std::size_t nearest(const PatchSpectrum& spectrum) const;
    double distance(const std::vector<double>& a, const std::vector<double>& b) const;
    double distance(const std::vector<double>& a, const std::vector<double>& b,
                    const std::vector<bool>& usable) const;

private:
    DictionaryGrid grid_;
    SpectralConfig config_;
    SpectrumPrior prior_;
    std::vector<DictionaryEntry> entries_;
};

SpectralDictionary build_dictionary(const DictionaryGrid& grid, const SpectralConfig& config,
                                    const SpectrumPrior& prior = PowerLawPrior{});

// Radially averaged log(|FFT|^2 + 1e-12) of a square field, `bins` equal
// bins over (0, 0.5] cycles/pixel, each sample offset by
// whitening_exponent * log(f).
std::vector<double> radial_log_spectrum(const Image& field, int bins, double whitening_exponent);

PatchSpectrum patch_spectrum(const Image& patch, const SpectralConfig& config);

// Whitened radial log power spectrum of a zero-mean patch (all bins).
std::vector<double> patch_signature(const Image& patch, const SpectralConfig& config);

// Radial average of log(|OTF|^2 + 1e-12) of the PSF for `coeffs`.
std::vector<double> otf_signature(const optics::CoeffVector& coeffs, const SpectralConfig& config);

// One period of the reference texture circularly blurred by `coeffs`'s PSF.
// Throws ContractError for a power-law dictionary.
Image reference_patch(const SpectralDictionary& dict, const optics::CoeffVector& coeffs);

optics::CoeffVector estimate_spectral(const Image& patch, const SpectralDictionary& dict);

class DictionaryEstimator final : public PatchEstimator {
public:
    explicit DictionaryEstimator(std::shared_ptr<const SpectralDictionary> dict);

    int n_params() const override { return dict_->grid().n_params; }
    int patch_size() const override { return dict_->config().patch_size; }
    double coeff_min() const override { return dict_->grid().coeff_min; }
    double coeff_max() const override { return dict_->grid().coeff_max; }
    const SpectralDictionary& dictionary() const noexcept { return *dict_; }

protected:
    optics::CoeffVector regress(const Image& patch) const override;

private:
    std::shared_ptr<const SpectralDictionary> dict_;
};

struct ExternalModelOptions {
    int n_params = 1;
    int patch_size = 128;
    double coeff_min = 0.0;
    double coeff_max = 2.0;
};

// ONNX inference graph with one float32 input "patch" (1x1xPxP) and one
// float32 output "coeffs" (1xN). Throws ModelLoadError naming the defect.
std::unique_ptr<PatchEstimator> load_external_model(const std::filesystem::path& path,
                                                    const ExternalModelOptions& options = {});

}  // namespace psfdeconv::estimator
