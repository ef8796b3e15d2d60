#pragma once

#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace modnet {

namespace detail {

inline int& kernel_threads_ref() {
    static int n = [] {
        if (const char* env = std::getenv("MODNET_THREADS")) {
            int v = std::atoi(env);
            if (v >= 1) return v;
        }
        unsigned hw = std::thread::hardware_concurrency();
        return hw == 0 ? 1 : static_cast<int>(hw);
    }();
    return n;
}

}  // namespace detail

inline int kernel_threads() { return detail::kernel_threads_ref(); }
inline void set_kernel_threads(int n) { detail::kernel_threads_ref() = n < 1 ? 1 : n; }

// Restores the previous kernel thread count on scope exit; used when jobs are
// parallelized at a coarser level (sweep rows) to avoid oversubscription.
struct KernelThreadsGuard {
    int saved;
    explicit KernelThreadsGuard(int n) : saved(kernel_threads()) { set_kernel_threads(n); }
    ~KernelThreadsGuard() { set_kernel_threads(saved); }
};

// Splits [0, total) into contiguous chunks, one per thread. Every index is
// computed by exactly one thread and no reductions cross threads, so results
// are bitwise identical for any thread count.
template <typename F>
void parallel_for(std::size_t total, F&& body) {
    const int want = kernel_threads();
    if (want <= 1 || total < 2) {
        body(static_cast<std::size_t>(0), total);
        return;
    }
    const std::size_t n_threads = std::min<std::size_t>(static_cast<std::size_t>(want), total);
    const std::size_t chunk = (total + n_threads - 1) / n_threads;
    std::vector<std::thread> pool;
    pool.reserve(n_threads - 1);
    for (std::size_t t = 1; t < n_threads; ++t) {
        std::size_t lo = t * chunk;
        std::size_t hi = std::min(total, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&body, lo, hi] { body(lo, hi); });
    }
    body(0, std::min(total, chunk));
    for (auto& th : pool) th.join();
}

}  // namespace modnet
