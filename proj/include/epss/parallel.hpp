#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace epss {

/// Runs fn(i) for i in [0, n) across `threads` workers. Work is dealt in
/// fixed-size blocks whose boundaries depend only on n, so any reduction the
/// caller performs over per-index output slots is independent of the thread
/// count. fn must only write state owned by index i.
inline void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    if (threads < 1) threads = 1;
    const std::size_t grain = 256;  // fixed: block layout must not depend on `threads`
    const std::size_t blocks = (n + grain - 1) / grain;
    if (threads == 1 || blocks == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next_block{0};
    std::atomic<bool> failed{false};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&]() {
        for (;;) {
            std::size_t b = next_block.fetch_add(1);
            if (b >= blocks || failed.load()) return;
            std::size_t begin = b * grain;
            std::size_t end = begin + grain < n ? begin + grain : n;
            try {
                for (std::size_t i = begin; i < end; ++i) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                failed.store(true);
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    int nworkers = threads;
    if (static_cast<std::size_t>(nworkers) > blocks) nworkers = static_cast<int>(blocks);
    pool.reserve(static_cast<std::size_t>(nworkers));
    for (int t = 0; t < nworkers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace epss
