#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace compcov {

/// Environment variable holding the worker thread count.
inline constexpr const char* kThreadsEnv = "COMPCOV_THREADS";

/// Worker count from COMPCOV_THREADS, falling back to the hardware concurrency.
inline std::size_t thread_count()
{
    if (const char* env = std::getenv(kThreadsEnv); env != nullptr && *env != '\0') {
        try {
            const long v = std::stol(env);
            if (v >= 1) return static_cast<std::size_t>(v);
        } catch (const std::exception&) {
            // fall through to the default
        }
    }
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

/**
 * Run body(i) for i in [0, n). Each index is processed by exactly one worker,
 * so callers that write results to slot i get schedule-independent output.
 * The first exception thrown by any body is rethrown on the calling thread.
 */
template <class Body>
void parallel_for(std::size_t n, Body&& body, std::size_t workers = thread_count())
{
    workers = std::min(workers, n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;

    auto run = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                body(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                next.store(n);
                return;
            }
        }
    };

    std::vector<std::jthread> pool;
    pool.reserve(workers - 1);
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run);
    run();
    pool.clear();

    if (first_error) std::rethrow_exception(first_error);
}

} // namespace compcov
