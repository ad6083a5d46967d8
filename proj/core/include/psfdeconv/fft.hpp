#pragma once

#include <algorithm>
#include <complex>
#include <cstddef>
#include <memory>
#include <span>

namespace psfdeconv::fft {

using Complex = std::complex<double>;

// Smallest integer >= n whose only prime factors are 2, 3, 5 and 7.
int good_size(int n);

namespace detail {
struct FftwDeleter {
    void operator()(void* p) const noexcept;
};
void* aligned_alloc_bytes(std::size_t bytes);
}  // namespace detail

// SIMD-aligned scratch array owned by FFTW's allocator.
template <typename T>
class AlignedBuffer {
public:
    AlignedBuffer() = default;
    explicit AlignedBuffer(std::size_t n)
        : size_(n), data_(static_cast<T*>(detail::aligned_alloc_bytes(n * sizeof(T)))) {
        std::fill(data_.get(), data_.get() + n, T{});
    }

    T* data() noexcept { return data_.get(); }
    const T* data() const noexcept { return data_.get(); }
    std::size_t size() const noexcept { return size_; }
    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }
    std::span<T> span() noexcept { return {data_.get(), size_}; }
    std::span<const T> span() const noexcept { return {data_.get(), size_}; }
    void zero() noexcept { std::fill(data_.get(), data_.get() + size_, T{}); }

private:
    std::size_t size_ = 0;
    std::unique_ptr<T[], detail::FftwDeleter> data_;
};

// Real <-> half-complex 2D transform of a fixed rows x cols field. Plans are
// shared through a process-wide cache guarded by a mutex; executing a
// transform is reentrant.
class RealFft2d {
public:
    RealFft2d(int rows, int cols);

    int rows() const noexcept { return rows_; }
    int cols() const noexcept { return cols_; }
    int spectrum_cols() const noexcept { return cols_ / 2 + 1; }
    std::size_t real_size() const noexcept { return static_cast<std::size_t>(rows_) * cols_; }
    std::size_t spectrum_size() const noexcept {
        return static_cast<std::size_t>(rows_) * spectrum_cols();
    }

    AlignedBuffer<double> make_real() const { return AlignedBuffer<double>(real_size()); }
    AlignedBuffer<Complex> make_spectrum() const { return AlignedBuffer<Complex>(spectrum_size()); }

    void forward(const AlignedBuffer<double>& in, AlignedBuffer<Complex>& out) const;
    // Normalized inverse (divides by rows*cols). `in` is clobbered.
    void inverse(AlignedBuffer<Complex>& in, AlignedBuffer<double>& out) const;

private:
    int rows_;
    int cols_;
    void* forward_plan_;
    void* inverse_plan_;
};

// In-place complex 2D transform; the inverse is normalized.
void complex_fft2d(AlignedBuffer<Complex>& data, int rows, int cols, bool inverse);

}  // namespace psfdeconv::fft
