#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace lag::detail {

// Float inputs, double accumulation, fixed left-to-right order. Every scoring
// path goes through this so batched and per-token results are bit-identical.
inline double dot_f64(const float* a, const float* b, std::size_t n) noexcept {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        acc += static_cast<double>(a[j]) * static_cast<double>(b[j]);
    }
    return acc;
}

inline double dot_f64(const float* a, const double* b, std::size_t n) noexcept {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        acc += static_cast<double>(a[j]) * b[j];
    }
    return acc;
}

inline std::size_t default_threads() noexcept {
    const auto hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

// Static partition of [0, count) into contiguous chunks. fn(i) must only
// touch state owned by index i.
template <typename Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn&& fn) {
    threads = std::max<std::size_t>(1, std::min(threads, count));
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::exception_ptr first_error;
    std::mutex error_mutex;
    {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    const std::size_t chunk = (count + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
        const std::size_t begin = t * chunk;
        const std::size_t end = std::min(count, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([begin, end, &fn, &first_error, &error_mutex] {
            try {
                for (std::size_t i = begin; i < end; ++i) fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    }
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace lag::detail
