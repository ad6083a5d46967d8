#include "psfdeconv/psfmap.hpp"

#include "psfdeconv/error.hpp"
#include "psfdeconv/imageops.hpp"
#include "psfdeconv/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

namespace psfdeconv::psfmap {

using nlohmann::json;

int grid_count(int extent, int window, int stride) {
    if (window < 1 || stride < 1) throw GeometryError("window and stride must be positive");
    if (extent < window) {
        throw GeometryError("image side " + std::to_string(extent) + " is smaller than the window " +
                            std::to_string(window));
    }
    return (extent - window) / stride + 1;
}

PsfMap::PsfMap(int image_width, int image_height, int window, int stride,
               std::vector<optics::CoeffVector> cells, std::vector<bool> low_confidence)
    : image_width_(image_width),
      image_height_(image_height),
      window_(window),
      stride_(stride),
      rows_(grid_count(image_height, window, stride)),
      cols_(grid_count(image_width, window, stride)),
      cells_(std::move(cells)),
      low_confidence_(std::move(low_confidence)) {
    if (cells_.size() != static_cast<std::size_t>(rows_) * cols_) {
        throw GeometryError("map needs " + std::to_string(rows_ * cols_) + " cells, got " +
                            std::to_string(cells_.size()));
    }
    const int n = cells_.front().size();
    for (const auto& c : cells_) {
        if (c.size() != n) throw ContractError("map cells differ in parameter count");
    }
    if (low_confidence_.empty()) low_confidence_.assign(cells_.size(), false);
    if (low_confidence_.size() != cells_.size()) throw ContractError("confidence flags do not match cells");
}

PsfMap PsfMap::uniform(int image_width, int image_height, int window, int stride,
                       const optics::CoeffVector& coeffs) {
    const std::size_t m = static_cast<std::size_t>(grid_count(image_height, window, stride)) *
                          grid_count(image_width, window, stride);
    return PsfMap(image_width, image_height, window, stride, std::vector<optics::CoeffVector>(m, coeffs));
}

const optics::CoeffVector& PsfMap::at(int i, int j) const {
    if (i < 0 || i >= rows_ || j < 0 || j >= cols_) throw GeometryError("map cell out of range");
    return cells_[static_cast<std::size_t>(i) * cols_ + j];
}

bool PsfMap::low_confidence(int i, int j) const {
    if (i < 0 || i >= rows_ || j < 0 || j >= cols_) throw GeometryError("map cell out of range");
    return low_confidence_[static_cast<std::size_t>(i) * cols_ + j];
}

Box PsfMap::cell_box(int i, int j) const {
    return Box{i * stride_, j * stride_, i * stride_ + window_, j * stride_ + window_};
}

PsfMap PsfMap::transpose() const {
    std::vector<optics::CoeffVector> cells(cells_.size());
    std::vector<bool> flags(cells_.size());
    for (int i = 0; i < rows_; ++i) {
        for (int j = 0; j < cols_; ++j) {
            const std::size_t src = static_cast<std::size_t>(i) * cols_ + j;
            const std::size_t dst = static_cast<std::size_t>(j) * rows_ + i;
            cells[dst] = cells_[src];
            flags[dst] = low_confidence_[src];
        }
    }
    return PsfMap(image_height_, image_width_, window_, stride_, std::move(cells), std::move(flags));
}

Image PsfMap::parameter_grid(int param) const {
    if (param < 0 || param >= n_params()) throw DomainError("parameter index out of range");
    Image out(cols_, rows_);
    for (int i = 0; i < rows_; ++i) {
        for (int j = 0; j < cols_; ++j) out(i, j) = at(i, j)[param];
    }
    return out;
}

PsfMap estimate_map(const Image& image, const estimator::PatchEstimator& estimator, int window,
                    int stride, int threads) {
    if (window != estimator.patch_size()) {
        throw GeometryError("window " + std::to_string(window) + " differs from the estimator patch size " +
                            std::to_string(estimator.patch_size()));
    }
    const int rows = grid_count(image.height(), window, stride);
    const int cols = grid_count(image.width(), window, stride);
    const std::size_t m = static_cast<std::size_t>(rows) * cols;
    std::vector<optics::CoeffVector> cells(m);
    std::vector<char> flags(m, 0);
    parallel_for(m, threads, [&](std::size_t k) {
        const int i = static_cast<int>(k) / cols;
        const int j = static_cast<int>(k) % cols;
        const Image patch = imageops::normalize_patch(image.crop(i * stride, j * stride, window, window));
        auto est = estimator.estimate(patch);
        cells[k] = std::move(est.coeffs);
        flags[k] = est.low_confidence ? 1 : 0;
    });
    return PsfMap(image.width(), image.height(), window, stride, std::move(cells),
                  std::vector<bool>(flags.begin(), flags.end()));
}

namespace {

double median_of(std::vector<double>& v) {
    const std::size_t h = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(h), v.end());
    const double upper = v[h];
    if (v.size() % 2 == 1) return upper;
    const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(h));
    return 0.5 * (lower + upper);
}

}  // namespace

PsfMap smooth_map(const PsfMap& map, int radius) {
    if (radius < 0) throw DomainError("smoothing radius must be non-negative");
    if (radius == 0) return map;
    const int rows = map.grid_rows();
    const int cols = map.grid_cols();
    const int n = map.n_params();
    std::vector<optics::CoeffVector> cells(map.cells().size());
    std::vector<bool> flags(map.cells().size(), false);
    std::vector<double> votes;
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) {
            const std::size_t k = static_cast<std::size_t>(i) * cols + j;
            const bool self_low = map.low_confidence(i, j);
            std::vector<double> a(static_cast<std::size_t>(n));
            bool any_vote = false;
            for (int p = 0; p < n; ++p) {
                votes.clear();
                for (int di = -radius; di <= radius; ++di) {
                    for (int dj = -radius; dj <= radius; ++dj) {
                        const int ii = std::clamp(i + di, 0, rows - 1);
                        const int jj = std::clamp(j + dj, 0, cols - 1);
                        if (map.low_confidence(ii, jj)) continue;
                        votes.push_back(map.at(ii, jj)[p]);
                    }
                }
                if (votes.empty()) {
                    a[static_cast<std::size_t>(p)] = map.at(i, j)[p];
                } else {
                    any_vote = true;
                    a[static_cast<std::size_t>(p)] = median_of(votes);
                }
            }
            cells[k] = optics::CoeffVector(std::move(a));
            flags[k] = self_low && !any_vote;
        }
    }
    return PsfMap(map.image_width(), map.image_height(), map.window(), map.stride(), std::move(cells),
                  std::move(flags));
}

std::vector<optics::Psf> realize_kernels(const PsfMap& map, int psf_size, const optics::PupilGrid& pupil,
                                         const optics::AberrationBasis& basis) {
    std::vector<optics::Psf> out;
    out.reserve(map.cells().size());
    // Identical cells share one synthesis.
    for (std::size_t k = 0; k < map.cells().size(); ++k) {
        std::size_t same = k;
        for (std::size_t q = 0; q < k; ++q) {
            if (map.cells()[q] == map.cells()[k]) {
                same = q;
                break;
            }
        }
        if (same != k) out.push_back(out[same]);
        else out.push_back(optics::synthesize_psf(map.cells()[k], pupil, psf_size, basis));
    }
    return out;
}

std::string to_json(const PsfMap& map) {
    json cells = json::array();
    for (int i = 0; i < map.grid_rows(); ++i) {
        json row = json::array();
        for (int j = 0; j < map.grid_cols(); ++j) {
            const auto v = map.at(i, j).values();
            row.push_back(std::vector<double>(v.begin(), v.end()));
        }
        cells.push_back(std::move(row));
    }
    json doc{{"image_width", map.image_width()},
             {"image_height", map.image_height()},
             {"window", map.window()},
             {"stride", map.stride()},
             {"n_params", map.n_params()},
             {"cells", std::move(cells)}};
    return doc.dump(2);
}

PsfMap from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw IoError(std::string("map JSON does not parse: ") + e.what());
    }
    try {
        const int width = doc.at("image_width").get<int>();
        const int height = doc.at("image_height").get<int>();
        const int window = doc.at("window").get<int>();
        const int stride = doc.at("stride").get<int>();
        const int n = doc.at("n_params").get<int>();
        const int rows = grid_count(height, window, stride);
        const int cols = grid_count(width, window, stride);
        const auto& grid = doc.at("cells");
        if (!grid.is_array() || static_cast<int>(grid.size()) != rows) {
            throw IoError("map JSON must hold " + std::to_string(rows) + " rows of cells");
        }
        std::vector<optics::CoeffVector> cells;
        for (const auto& row : grid) {
            if (!row.is_array() || static_cast<int>(row.size()) != cols) {
                throw IoError("map JSON rows must hold " + std::to_string(cols) + " cells");
            }
            for (const auto& cell : row) {
                auto values = cell.get<std::vector<double>>();
                if (static_cast<int>(values.size()) != n) throw IoError("map cell length differs from n_params");
                cells.emplace_back(std::move(values));
            }
        }
        return PsfMap(width, height, window, stride, std::move(cells));
    } catch (const json::exception& e) {
        throw IoError(std::string("malformed map JSON: ") + e.what());
    }
}

void write_map(const std::filesystem::path& path, const PsfMap& map) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    os << to_json(map) << '\n';
    if (!os) throw IoError("write to '" + path.string() + "' failed");
}

PsfMap read_map(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open map '" + path.string() + "'");
    std::ostringstream ss;
    ss << is.rdbuf();
    return from_json(ss.str());
}

io::Rgb false_color(double t) {
    // Samples of the viridis ramp at t = 0, 1/8, ..., 1.
    static constexpr std::array<std::array<double, 3>, 9> stops{{{68, 1, 84},
                                                                 {71, 44, 122},
                                                                 {59, 81, 139},
                                                                 {44, 113, 142},
                                                                 {33, 144, 141},
                                                                 {39, 173, 129},
                                                                 {92, 200, 99},
                                                                 {170, 220, 50},
                                                                 {253, 231, 37}}};
    if (!std::isfinite(t)) t = 0.0;
    t = std::clamp(t, 0.0, 1.0) * 8.0;
    const int k = std::min(7, static_cast<int>(t));
    const double f = t - k;
    io::Rgb out{};
    for (int c = 0; c < 3; ++c) {
        const double v = stops[static_cast<std::size_t>(k)][static_cast<std::size_t>(c)] * (1.0 - f) +
                         stops[static_cast<std::size_t>(k) + 1][static_cast<std::size_t>(c)] * f;
        out[static_cast<std::size_t>(c)] = static_cast<std::uint8_t>(std::lround(v));
    }
    return out;
}

void write_map_png(const std::filesystem::path& path, const PsfMap& map, int param, double lo, double hi) {
    const Image grid = map.parameter_grid(param);
    const int w = map.image_width();
    const int h = map.image_height();
    auto nearest = [&](int pix, int cells) {
        const double c = (pix - (map.window() - 1) * 0.5) / map.stride();
        return std::clamp(static_cast<int>(std::lround(c)), 0, cells - 1);
    };
    std::vector<io::Rgb> px(static_cast<std::size_t>(w) * h);
    const double span = hi > lo ? hi - lo : 1.0;
    for (int r = 0; r < h; ++r) {
        const int i = nearest(r, map.grid_rows());
        for (int c = 0; c < w; ++c) {
            px[static_cast<std::size_t>(r) * w + c] = false_color((grid(i, nearest(c, map.grid_cols())) - lo) / span);
        }
    }
    io::write_png_rgb8(path, w, h, px);
}

}  // namespace psfdeconv::psfmap
