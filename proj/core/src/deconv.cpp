#include "psfdeconv/deconv.hpp"

#include "psfdeconv/error.hpp"
#include "psfdeconv/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <tuple>

namespace psfdeconv::deconv {

double Mask::at(int row, int col) const noexcept {
    if (row < box.y0 || row >= box.y1 || col < box.x0 || col >= box.x1) return 0.0;
    return weights(row - box.y0, col - box.x0);
}

MaskSet::MaskSet(int width, int height, std::vector<Mask> masks)
    : width_(width), height_(height), masks_(std::move(masks)) {
    if (masks_.empty()) throw ContractError("mask set is empty");
    for (const auto& m : masks_) {
        if (m.box.y0 < 0 || m.box.x0 < 0 || m.box.y1 > height_ || m.box.x1 > width_ || m.box.empty() ||
            m.weights.width() != m.box.width() || m.weights.height() != m.box.height()) {
            throw GeometryError("mask box does not fit the image");
        }
    }
}

Image MaskSet::full(std::size_t m) const {
    const Mask& mk = masks_.at(m);
    Image out(width_, height_);
    for (int r = mk.box.y0; r < mk.box.y1; ++r) {
        for (int c = mk.box.x0; c < mk.box.x1; ++c) out(r, c) = mk.weights(r - mk.box.y0, c - mk.box.x0);
    }
    return out;
}

Image MaskSet::sum() const {
    Image out(width_, height_);
    for (const auto& mk : masks_) {
        for (int r = mk.box.y0; r < mk.box.y1; ++r) {
            for (int c = mk.box.x0; c < mk.box.x1; ++c) out(r, c) += mk.weights(r - mk.box.y0, c - mk.box.x0);
        }
    }
    return out;
}

namespace {

// weights[i][x] for `cells` hats along an axis of length n.
std::vector<std::vector<double>> axis_hats(int n, int cells, int window, int stride) {
    std::vector<std::vector<double>> w(static_cast<std::size_t>(cells), std::vector<double>(static_cast<std::size_t>(n), 0.0));
    auto centre = [&](int i) { return i * stride + (window - 1) * 0.5; };
    for (int x = 0; x < n; ++x) {
        if (cells == 1 || x <= centre(0)) {
            w[0][static_cast<std::size_t>(x)] = 1.0;
            continue;
        }
        if (x >= centre(cells - 1)) {
            w[static_cast<std::size_t>(cells) - 1][static_cast<std::size_t>(x)] = 1.0;
            continue;
        }
        const int k = std::min(cells - 2, static_cast<int>(std::floor((x - centre(0)) / stride)));
        const double t = (x - centre(k)) / stride;
        w[static_cast<std::size_t>(k)][static_cast<std::size_t>(x)] = 1.0 - t;
        w[static_cast<std::size_t>(k) + 1][static_cast<std::size_t>(x)] = t;
    }
    return w;
}

std::pair<int, int> support(const std::vector<double>& w) {
    int lo = 0;
    int hi = static_cast<int>(w.size());
    while (lo < hi && w[static_cast<std::size_t>(lo)] == 0.0) ++lo;
    while (hi > lo && w[static_cast<std::size_t>(hi) - 1] == 0.0) --hi;
    return {lo, hi};
}

}  // namespace

MaskSet build_masks(int width, int height, int grid_rows, int grid_cols, int window, int stride) {
    if (grid_rows < 1 || grid_cols < 1 || window < 1 || stride < 1) throw GeometryError("invalid mask geometry");
    const auto wy = axis_hats(height, grid_rows, window, stride);
    const auto wx = axis_hats(width, grid_cols, window, stride);
    std::vector<Mask> masks;
    masks.reserve(static_cast<std::size_t>(grid_rows) * grid_cols);
    for (int i = 0; i < grid_rows; ++i) {
        const auto [y0, y1] = support(wy[static_cast<std::size_t>(i)]);
        for (int j = 0; j < grid_cols; ++j) {
            const auto [x0, x1] = support(wx[static_cast<std::size_t>(j)]);
            Mask m;
            m.box = Box{y0, x0, y1, x1};
            m.weights = Image(x1 - x0, y1 - y0);
            for (int r = y0; r < y1; ++r) {
                for (int c = x0; c < x1; ++c) {
                    m.weights(r - y0, c - x0) = wy[static_cast<std::size_t>(i)][static_cast<std::size_t>(r)] *
                                                wx[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)];
                }
            }
            masks.push_back(std::move(m));
        }
    }
    return MaskSet(width, height, std::move(masks));
}

MaskSet build_masks(const psfmap::PsfMap& map) {
    return build_masks(map.image_width(), map.image_height(), map.grid_rows(), map.grid_cols(), map.window(),
                       map.stride());
}

namespace {

struct Patch {
    std::size_t mask = 0;
    Box ext;  // input support, may reach r pixels past the image when mirroring
    Box out;  // output support clipped to the image
    std::shared_ptr<const ConvolutionPlan> plan;
};

// Extent along one axis of [lo, hi) plus the part of its mirror image that
// falls within r pixels outside [0, n).
std::pair<int, int> mirrored_extent(int lo, int hi, int n, int r) {
    int e_lo = lo;
    int e_hi = hi;
    if (lo < r) e_lo = std::min(lo, std::max(-r, -hi));
    if (hi > n - r) e_hi = std::max(hi, std::min(n + r, 2 * n - lo));
    return {e_lo, e_hi};
}

}  // namespace

struct SvOperator::Impl {
    std::vector<optics::Psf> kernels;
    MaskSet masks;
    Padding padding;
    int threads;
    std::vector<Patch> patches;

    Impl(std::vector<optics::Psf> k, MaskSet m, Padding p, int t)
        : kernels(std::move(k)), masks(std::move(m)), padding(p), threads(t) {}

    int map_row(int q) const { return padding == Padding::reflect ? mirror_index(q, masks.height()) : q; }
    int map_col(int q) const { return padding == Padding::reflect ? mirror_index(q, masks.width()) : q; }

    Image forward_patch(const Patch& p, const Image& x) const {
        const Mask& mk = masks[p.mask];
        Image field(p.ext.width(), p.ext.height());
        for (int qy = p.ext.y0; qy < p.ext.y1; ++qy) {
            const int sy = map_row(qy);
            if (sy < mk.box.y0 || sy >= mk.box.y1) continue;
            for (int qx = p.ext.x0; qx < p.ext.x1; ++qx) {
                const int sx = map_col(qx);
                if (sx < mk.box.x0 || sx >= mk.box.x1) continue;
                field(qy - p.ext.y0, qx - p.ext.x0) = mk.weights(sy - mk.box.y0, sx - mk.box.x0) * x(sy, sx);
            }
        }
        const Image full = p.plan->convolve_full(field);
        const int r = p.plan->radius();
        return full.crop(p.out.y0 - p.ext.y0 + r, p.out.x0 - p.ext.x0 + r, p.out.height(), p.out.width());
    }

    // Contribution on the mask box.
    Image adjoint_patch(const Patch& p, const Image& res) const {
        const Mask& mk = masks[p.mask];
        const int r = p.plan->radius();
        Image g(p.ext.width() + 2 * r, p.ext.height() + 2 * r);
        for (int y = p.out.y0; y < p.out.y1; ++y) {
            for (int x = p.out.x0; x < p.out.x1; ++x) g(y - p.ext.y0 + r, x - p.ext.x0 + r) = res(y, x);
        }
        const Image back = p.plan->correlate_full(g);
        Image out(mk.box.width(), mk.box.height());
        for (int qy = p.ext.y0; qy < p.ext.y1; ++qy) {
            const int sy = map_row(qy);
            if (sy < mk.box.y0 || sy >= mk.box.y1) continue;
            for (int qx = p.ext.x0; qx < p.ext.x1; ++qx) {
                const int sx = map_col(qx);
                if (sx < mk.box.x0 || sx >= mk.box.x1) continue;
                out(sy - mk.box.y0, sx - mk.box.x0) += back(qy - p.ext.y0, qx - p.ext.x0);
            }
        }
        for (int y = 0; y < out.height(); ++y) {
            for (int x = 0; x < out.width(); ++x) out(y, x) *= mk.weights(y, x);
        }
        return out;
    }

    // Evaluates `term` for every patch and accumulates into `acc` in patch
    // order, so the sum does not depend on the worker count.
    template <typename Term, typename Dest>
    void reduce(Term term, Dest dest, Image& acc) const {
        const int workers = threads > 0 ? threads : default_threads();
        const std::size_t batch = static_cast<std::size_t>(std::max(1, workers));
        std::vector<Image> parts(std::min(batch, patches.size()));
        for (std::size_t start = 0; start < patches.size(); start += batch) {
            const std::size_t count = std::min(batch, patches.size() - start);
            parallel_for(count, workers, [&](std::size_t k) { parts[k] = term(patches[start + k]); });
            for (std::size_t k = 0; k < count; ++k) {
                const Box b = dest(patches[start + k]);
                const Image& part = parts[k];
                for (int y = b.y0; y < b.y1; ++y) {
                    for (int x = b.x0; x < b.x1; ++x) acc(y, x) += part(y - b.y0, x - b.x0);
                }
            }
        }
    }
};

SvOperator::SvOperator(std::vector<optics::Psf> kernels, MaskSet masks, Padding padding, int threads) {
    if (kernels.size() != masks.size()) {
        throw ContractError("got " + std::to_string(kernels.size()) + " kernels for " +
                            std::to_string(masks.size()) + " masks");
    }
    impl_ = std::make_unique<Impl>(std::move(kernels), std::move(masks), padding, threads);
    const int h = impl_->masks.height();
    const int w = impl_->masks.width();
    std::map<std::tuple<std::size_t, int, int>, std::shared_ptr<const ConvolutionPlan>> plans;
    for (std::size_t m = 0; m < impl_->masks.size(); ++m) {
        const auto& kern = impl_->kernels[m];
        const int r = kern.radius();
        if (padding == Padding::reflect && (r > h || r > w)) {
            throw GeometryError("kernel radius " + std::to_string(r) + " exceeds the image for reflective padding");
        }
        const Box& box = impl_->masks[m].box;
        Patch p;
        p.mask = m;
        if (padding == Padding::reflect) {
            const auto [ey0, ey1] = mirrored_extent(box.y0, box.y1, h, r);
            const auto [ex0, ex1] = mirrored_extent(box.x0, box.x1, w, r);
            p.ext = Box{ey0, ex0, ey1, ex1};
        } else {
            p.ext = box;
        }
        p.out = Box{std::max(0, p.ext.y0 - r), std::max(0, p.ext.x0 - r), std::min(h, p.ext.y1 + r),
                    std::min(w, p.ext.x1 + r)};
        std::size_t kernel_id = m;
        for (std::size_t q = 0; q < m; ++q) {
            if (impl_->kernels[q] == kern) {
                kernel_id = q;
                break;
            }
        }
        auto& plan = plans[{kernel_id, p.ext.height(), p.ext.width()}];
        if (!plan) plan = std::make_shared<ConvolutionPlan>(kern, p.ext.height(), p.ext.width());
        p.plan = plan;
        impl_->patches.push_back(std::move(p));
    }
}

SvOperator::~SvOperator() = default;
SvOperator::SvOperator(SvOperator&&) noexcept = default;
SvOperator& SvOperator::operator=(SvOperator&&) noexcept = default;

int SvOperator::width() const noexcept { return impl_->masks.width(); }
int SvOperator::height() const noexcept { return impl_->masks.height(); }
std::size_t SvOperator::size() const noexcept { return impl_->patches.size(); }

Image SvOperator::apply(const Image& x) const {
    if (x.width() != width() || x.height() != height()) throw GeometryError("image does not match the mask geometry");
    Image acc(width(), height());
    impl_->reduce([&](const Patch& p) { return impl_->forward_patch(p, x); },
                  [](const Patch& p) { return p.out; }, acc);
    return acc;
}

Image SvOperator::adjoint(const Image& r) const {
    if (r.width() != width() || r.height() != height()) throw GeometryError("image does not match the mask geometry");
    Image acc(width(), height());
    impl_->reduce([&](const Patch& p) { return impl_->adjoint_patch(p, r); },
                  [&](const Patch& p) { return impl_->masks[p.mask].box; }, acc);
    return acc;
}

Image sv_convolve(const Image& image, const std::vector<optics::Psf>& kernels, const MaskSet& masks,
                  Padding padding, int threads) {
    return SvOperator(kernels, masks, padding, threads).apply(image);
}

Image tv_gradient_term(const Image& x, double eps) {
    const int h = x.height();
    const int w = x.width();
    Image px(w, h);
    Image py(w, h);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const double gx = c + 1 < w ? x(r, c + 1) - x(r, c) : 0.0;
            const double gy = r + 1 < h ? x(r + 1, c) - x(r, c) : 0.0;
            const double norm = std::sqrt(gx * gx + gy * gy + eps * eps);
            px(r, c) = gx / norm;
            py(r, c) = gy / norm;
        }
    }
    Image div(w, h);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            div(r, c) = px(r, c) - (c > 0 ? px(r, c - 1) : 0.0) + py(r, c) - (r > 0 ? py(r - 1, c) : 0.0);
        }
    }
    return div;
}

namespace {

constexpr double kDenominatorFloor = 1e-12;
constexpr double kTvFactorFloor = 0.1;

}  // namespace

Image tv_rl_deconvolve(const Image& y, const std::vector<optics::Psf>& kernels, const MaskSet& masks,
                       const RlOptions& options) {
    if (options.iters < 1) throw DomainError("iteration count must be at least 1");
    if (!(options.lambda_tv >= 0.0 && options.lambda_tv < 1.0)) throw DomainError("lambda_tv must lie in [0, 1)");
    if (y.width() != masks.width() || y.height() != masks.height()) {
        throw GeometryError("observation does not match the map geometry");
    }
    for (double v : y.pixels()) {
        if (!std::isfinite(v)) throw DomainError("observation contains non-finite values");
        if (v < 0.0) throw DomainError("observation contains negative values");
    }
    const SvOperator op(kernels, masks, options.padding, options.threads);
    const Image norm = op.adjoint(Image(y.width(), y.height(), 1.0));

    Image x = y;
    Image ratio(y.width(), y.height());
    for (int it = 1; it <= options.iters; ++it) {
        const Image ax = op.apply(x);
        for (std::size_t k = 0; k < ratio.size(); ++k) {
            ratio.pixels()[k] = y.pixels()[k] / std::max(ax.pixels()[k], kDenominatorFloor);
        }
        const Image back = op.adjoint(ratio);
        const Image tv = options.lambda_tv > 0.0 ? tv_gradient_term(x) : Image(x.width(), x.height());
        bool finite = true;
        for (std::size_t k = 0; k < x.size(); ++k) {
            const double factor = std::max(1.0 - options.lambda_tv * tv.pixels()[k], kTvFactorFloor);
            double v = x.pixels()[k] * back.pixels()[k] / std::max(norm.pixels()[k], kDenominatorFloor) / factor;
            if (!std::isfinite(v)) finite = false;
            x.pixels()[k] = std::max(v, 0.0);
        }
        if (!finite) throw NumericalFailure("non-finite value in RL iteration " + std::to_string(it), it);
        if (options.on_iterate && (options.dump_every <= 1 || it % options.dump_every == 0)) options.on_iterate(it, x);
    }
    return x;
}

Image tv_rl_deconvolve(const Image& y, const psfmap::PsfMap& map, const RlOptions& options, int psf_size) {
    if (y.width() != map.image_width() || y.height() != map.image_height()) {
        throw GeometryError("observation does not match the map geometry");
    }
    return tv_rl_deconvolve(y, psfmap::realize_kernels(map, psf_size), build_masks(map), options);
}

}  // namespace psfdeconv::deconv
