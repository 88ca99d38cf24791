#pragma once

#include <cstdint>
#include <cstdlib>
#include <thread>
#include <vector>

namespace wmx2 {

// Worker count for data-parallel loops. Controlled by WMX2_THREADS
// (0 or unset = hardware concurrency).
inline int thread_budget() {
    static const int budget = [] {
        int n = 0;
        if (const char* env = std::getenv("WMX2_THREADS")) {
            n = std::atoi(env);
        }
        if (n <= 0) {
            n = static_cast<int>(std::thread::hardware_concurrency());
        }
        return n > 0 ? n : 1;
    }();
    return budget;
}

// Runs fn(lo, hi) over a static partition of [begin, end). Each index is
// processed by exactly one worker in ascending order, so results do not
// depend on the worker count (determinism invariant).
template <typename Fn>
void parallel_for(int64_t begin, int64_t end, Fn&& fn, int64_t min_grain = 1) {
    const int64_t total = end - begin;
    if (total <= 0) return;
    int workers = thread_budget();
    if (workers > total / min_grain) workers = static_cast<int>(total / min_grain);
    if (workers <= 1) {
        fn(begin, end);
        return;
    }
    const int64_t chunk = (total + workers - 1) / workers;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers) - 1);
    for (int t = 1; t < workers; ++t) {
        const int64_t lo = begin + chunk * t;
        const int64_t hi = std::min(end, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&fn, lo, hi] { fn(lo, hi); });
    }
    fn(begin, std::min(end, begin + chunk));
    for (auto& th : pool) th.join();
}

}  // namespace wmx2
