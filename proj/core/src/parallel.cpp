#include "psfdeconv/parallel.hpp"

namespace psfdeconv {

namespace {
std::atomic<int> g_default_threads{0};
}

int default_threads() noexcept {
    const int configured = g_default_threads.load();
    if (configured > 0) return configured;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

void set_default_threads(int threads) noexcept { g_default_threads.store(threads > 0 ? threads : 0); }

}  // namespace psfdeconv
