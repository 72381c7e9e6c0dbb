#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace sigmaflow {

/// Worker count: SIGMAFLOW_THREADS if set and positive, otherwise the
/// hardware concurrency (0 means auto).
[[nodiscard]] inline unsigned worker_count() {
    static const unsigned count = [] {
        unsigned hw = std::max(1u, std::thread::hardware_concurrency());
        if (const char* env = std::getenv("SIGMAFLOW_THREADS")) {
            try {
                const long v = std::stol(env);
                if (v > 0) return static_cast<unsigned>(v);
            } catch (...) {
            }
        }
        return hw;
    }();
    return count;
}

/// Runs body(begin, end) over disjoint chunks of [0, count). Exceptions from
/// workers are rethrown on the calling thread (first one wins).
template <class Body>
void parallel_for(std::size_t count, Body&& body) {
    const unsigned workers = worker_count();
    if (workers <= 1 || count < 4096) {
        body(std::size_t{0}, count);
        return;
    }
    const std::size_t chunks = std::min<std::size_t>(workers, count);
    std::vector<std::thread> threads;
    std::vector<std::exception_ptr> errors(chunks);
    threads.reserve(chunks);
    for (std::size_t c = 0; c < chunks; ++c) {
        const std::size_t lo = count * c / chunks;
        const std::size_t hi = count * (c + 1) / chunks;
        threads.emplace_back([&, c, lo, hi] {
            try {
                body(lo, hi);
            } catch (...) {
                errors[c] = std::current_exception();
            }
        });
    }
    for (auto& t : threads) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace sigmaflow
