#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace dnp {

/// Runs body(0..count-1) on up to `jobs` threads. Each index runs exactly
/// once; the first exception thrown by any body is rethrown after all
/// threads have joined. jobs <= 1 runs inline.
inline void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& body)
{
    if (jobs <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i)
            body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(count);
    {
        std::vector<std::jthread> pool;
        const std::size_t n = std::min(jobs, count);
        pool.reserve(n);
        for (std::size_t t = 0; t < n; ++t)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < count; i = next++) {
                    try {
                        body(i);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            });
    }
    for (const auto& e : errors)
        if (e)
            std::rethrow_exception(e);
}

} // namespace dnp
