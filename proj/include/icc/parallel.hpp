#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace icc {

/// Worker count from ICC_THREADS, else the hardware concurrency. Never 0.
/// Throws ValidationError when ICC_THREADS is set but not a positive integer.
std::size_t thread_count_from_env();

/// Runs f(i) for every i in [0, n) on up to `threads` workers. `f` must not
/// throw; callers capture per-item failures themselves.
template <typename F>
void parallel_for(std::size_t n, std::size_t threads, F&& f) {
    threads = std::max<std::size_t>(1, std::min(threads, n));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) f(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace icc
