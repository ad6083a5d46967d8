#include "psfdeconv/fft.hpp"

#include "psfdeconv/error.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <new>
#include <tuple>

namespace psfdeconv::fft {

namespace detail {

void FftwDeleter::operator()(void* p) const noexcept { fftw_free(p); }

void* aligned_alloc_bytes(std::size_t bytes) {
    void* p = fftw_malloc(bytes == 0 ? 1 : bytes);
    if (p == nullptr) throw std::bad_alloc();
    return p;
}

}  // namespace detail

namespace {

enum class PlanKind { r2c, c2r, c2c_forward, c2c_inverse };

struct PlanCache {
    std::mutex mutex;
    std::map<std::tuple<PlanKind, int, int>, fftw_plan> plans;

    ~PlanCache() {
        for (auto& [key, plan] : plans) fftw_destroy_plan(plan);
    }
};

PlanCache& cache() {
    static PlanCache instance;
    return instance;
}

// FFTW_ESTIMATE keeps plan selection deterministic, so repeated runs are
// bit-identical.
fftw_plan get_plan(PlanKind kind, int rows, int cols) {
    auto& c = cache();
    std::lock_guard lock(c.mutex);
    const auto key = std::make_tuple(kind, rows, cols);
    if (auto it = c.plans.find(key); it != c.plans.end()) return it->second;

    const std::size_t n_real = static_cast<std::size_t>(rows) * cols;
    const std::size_t n_half = static_cast<std::size_t>(rows) * (cols / 2 + 1);
    fftw_plan plan = nullptr;
    switch (kind) {
        case PlanKind::r2c: {
            AlignedBuffer<double> in(n_real);
            AlignedBuffer<Complex> out(n_half);
            plan = fftw_plan_dft_r2c_2d(rows, cols, in.data(),
                                        reinterpret_cast<fftw_complex*>(out.data()),
                                        FFTW_ESTIMATE);
            break;
        }
        case PlanKind::c2r: {
            AlignedBuffer<Complex> in(n_half);
            AlignedBuffer<double> out(n_real);
            plan = fftw_plan_dft_c2r_2d(rows, cols, reinterpret_cast<fftw_complex*>(in.data()),
                                        out.data(), FFTW_ESTIMATE);
            break;
        }
        case PlanKind::c2c_forward:
        case PlanKind::c2c_inverse: {
            AlignedBuffer<Complex> buf(n_real);
            auto* p = reinterpret_cast<fftw_complex*>(buf.data());
            plan = fftw_plan_dft_2d(rows, cols, p, p,
                                    kind == PlanKind::c2c_forward ? FFTW_FORWARD : FFTW_BACKWARD,
                                    FFTW_ESTIMATE);
            break;
        }
    }
    if (plan == nullptr) {
        throw Error("FFTW failed to create a " + std::to_string(rows) + "x" +
                    std::to_string(cols) + " plan");
    }
    c.plans.emplace(key, plan);
    return plan;
}

}  // namespace

int good_size(int n) {
    if (n <= 1) return 1;
    for (int m = n;; ++m) {
        int r = m;
        for (int p : {2, 3, 5, 7})
            while (r % p == 0) r /= p;
        if (r == 1) return m;
    }
}

RealFft2d::RealFft2d(int rows, int cols) : rows_(rows), cols_(cols) {
    if (rows <= 0 || cols <= 0) throw GeometryError("FFT dimensions must be positive");
    forward_plan_ = get_plan(PlanKind::r2c, rows, cols);
    inverse_plan_ = get_plan(PlanKind::c2r, rows, cols);
}

void RealFft2d::forward(const AlignedBuffer<double>& in, AlignedBuffer<Complex>& out) const {
    fftw_execute_dft_r2c(static_cast<fftw_plan>(forward_plan_), const_cast<double*>(in.data()),
                         reinterpret_cast<fftw_complex*>(out.data()));
}

void RealFft2d::inverse(AlignedBuffer<Complex>& in, AlignedBuffer<double>& out) const {
    fftw_execute_dft_c2r(static_cast<fftw_plan>(inverse_plan_),
                         reinterpret_cast<fftw_complex*>(in.data()), out.data());
    const double scale = 1.0 / static_cast<double>(real_size());
    for (std::size_t i = 0; i < real_size(); ++i) out[i] *= scale;
}

void complex_fft2d(AlignedBuffer<Complex>& data, int rows, int cols, bool inverse) {
    if (data.size() != static_cast<std::size_t>(rows) * cols) {
        throw GeometryError("complex_fft2d: buffer size mismatch");
    }
    auto plan = get_plan(inverse ? PlanKind::c2c_inverse : PlanKind::c2c_forward, rows, cols);
    auto* p = reinterpret_cast<fftw_complex*>(data.data());
    fftw_execute_dft(plan, p, p);
    if (inverse) {
        const double scale = 1.0 / static_cast<double>(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) data[i] *= scale;
    }
}

}  // namespace psfdeconv::fft
