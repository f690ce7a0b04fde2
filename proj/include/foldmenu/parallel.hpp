#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace foldmenu {

/// Runs f(i) for i in [0, n) on up to `threads` workers in contiguous
/// blocks. The first exception thrown by any worker is rethrown.
template <typename F>
void parallel_for(std::size_t n, std::size_t threads, F&& f) {
    threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n, 1));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(threads);
    const std::size_t block = (n + threads - 1) / threads;
    for (std::size_t w = 0; w < threads; ++w) {
        const std::size_t begin = w * block;
        const std::size_t end = std::min(n, begin + block);
        if (begin >= end) break;
        pool.emplace_back([&, begin, end] {
            try {
                for (std::size_t i = begin; i < end; ++i) f(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace foldmenu
