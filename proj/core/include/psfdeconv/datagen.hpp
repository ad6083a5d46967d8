#pragma once

#include "psfdeconv/image.hpp"
#include "psfdeconv/optics.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace psfdeconv::datagen {

struct DatasetConfig {
    int n_params = 1;
    double coeff_min = 0.0;
    double coeff_max = 2.0;
    int patch_size = 128;
    int psf_size = 127;
    int count = 10000;
    // Absolute variance floor; sources are expected in [0, 1], so this is
    // 1e-4 of the squared dynamic range.
    double variance_min = 1e-4;
    double white_ratio_max = 0.5;
    std::vector<int> rotations{0, 90, 180, 270};
    // <= 0 disables noise.
    double photons_at_max = 1000.0;
    std::uint64_t rng_seed = 0;
    optics::PupilGrid pupil{};
    int astigmatism_noll = 5;
    int threads = 0;

    void validate() const;
};

struct TrainingPair {
    Image patch;
    optics::CoeffVector coeffs;
    // Where the patch came from; not part of the on-disk manifest.
    int source_index = 0;
    int row = 0;
    int col = 0;
    int rotation_degrees = 0;
};

// Convolves the full source with the PSF of `coeffs` (zero padding) and
// applies Poisson noise seeded by `noise_seed`.
Image degrade(const Image& source, const optics::CoeffVector& coeffs, const DatasetConfig& cfg,
              std::uint64_t noise_seed = 0);

enum class PatchVerdict { accepted, low_variance, saturated };

PatchVerdict classify_patch(const Image& patch, const DatasetConfig& cfg);
bool accept_patch(const Image& patch, const DatasetConfig& cfg);

// Fraction of pixels at or above 98% of the patch maximum.
double white_ratio(const Image& patch);

using PairSink = std::function<void(TrainingPair&&)>;

// Emits exactly cfg.count accepted pairs to `sink` in index order. Pair k
// draws from its own RNG stream seeded by (rng_seed, k), so the output does
// not depend on cfg.threads.
void generate_dataset(const std::vector<Image>& sources, const DatasetConfig& cfg,
                      const PairSink& sink);
std::vector<TrainingPair> generate_dataset(const std::vector<Image>& sources,
                                           const DatasetConfig& cfg);

// Pre-noise patch for a pair, recomputed from its provenance (rotation
// applied). Used to check augmentation against direct degradation.
Image noiseless_patch(const std::vector<Image>& sources, const TrainingPair& pair,
                      const DatasetConfig& cfg);

// Random ellipse/filament microscopy-like texture in [0, 1].
Image synthetic_cells(int width, int height, std::uint64_t seed);

// <out>/patches/<k>.png + <out>/manifest.csv
// (header: index,filename,scale,offset,a_0,...,a_{N-1}).
class DatasetWriter {
public:
    DatasetWriter(std::filesystem::path root, int n_params);
    ~DatasetWriter();
    DatasetWriter(const DatasetWriter&) = delete;
    DatasetWriter& operator=(const DatasetWriter&) = delete;

    void add(const TrainingPair& pair);
    void close();
    int written() const noexcept { return written_; }

private:
    std::filesystem::path root_;
    int n_params_;
    int written_ = 0;
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

struct ManifestRow {
    int index = 0;
    std::string filename;
    double scale = 1.0;
    double offset = 0.0;
    optics::CoeffVector coeffs;
};

std::vector<ManifestRow> read_manifest(const std::filesystem::path& root);
// Patches are dequantized with each row's scale and offset.
std::vector<TrainingPair> read_dataset(const std::filesystem::path& root);

}  // namespace psfdeconv::datagen
