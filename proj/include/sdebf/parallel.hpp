#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace sdebf {

// Runs fn(i) for i in [0, n) on up to `threads` workers. Results must be written to
// per-index slots, which keeps output independent of scheduling. The exception of
// the lowest failing index is rethrown after all workers finish.
inline void parallel_for(std::size_t n, std::size_t threads,
                         const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    if (threads <= 1 || n == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    const std::size_t k = std::min(threads, n);
    pool.reserve(k);
    for (std::size_t t = 0; t < k; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace sdebf
