#pragma once
// Deterministic work fan-out. Each index writes only its own output slot, so
// results are identical whatever the schedule. AACT_THREADS caps the worker
// count; 0 means run serially.

#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace aact {

inline std::size_t worker_count() {
    std::size_t workers = std::thread::hardware_concurrency();
    if (workers == 0) workers = 1;
    if (const char* env = std::getenv("AACT_THREADS")) {
        char* end = nullptr;
        const long parsed = std::strtol(env, &end, 10);
        if (end != env && parsed >= 0 && static_cast<std::size_t>(parsed) < workers)
            workers = parsed == 0 ? 1 : static_cast<std::size_t>(parsed);
    }
    return workers;
}

template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    const std::size_t workers = std::min(worker_count(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
        });
    for (std::thread& t : pool) t.join();
}

}  // namespace aact
