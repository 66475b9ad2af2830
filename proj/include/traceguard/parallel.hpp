#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace traceguard {

// Runs f(i) for i in [0, n) on up to `workers` threads. Results must be
// written to index i of a preallocated output so ordering stays deterministic.
// The first exception thrown by any worker is rethrown after all join.
template <typename F>
void parallel_for(size_t n, size_t workers, F&& f) {
    if (n == 0) return;
    if (workers <= 1 || n == 1) {
        for (size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto body = [&] {
        for (;;) {
            size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                f(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                next.store(n);  // stop claiming new work
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    size_t count = std::min(workers, n);
    pool.reserve(count);
    for (size_t t = 0; t < count; ++t) pool.emplace_back(body);
    for (std::thread& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace traceguard
