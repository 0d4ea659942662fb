#pragma once

#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace mf {

// Runs fn(i) for every i in [0, n) across up to `jobs` threads. Each index is
// processed exactly once; fn must only write to per-index state, which keeps
// results identical for any job count.
template <typename Fn>
void parallel_for(size_t n, int jobs, Fn&& fn) {
    if (jobs <= 1 || n < 2) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const int workers = static_cast<int>(std::min<size_t>(jobs, n));
    std::atomic<size_t> next{0};
    auto run = [&] {
        for (;;) {
            const size_t i = next.fetch_add(1);
            if (i >= n) return;
            fn(i);
        }
    };
    std::vector<std::thread> threads;
    threads.reserve(workers - 1);
    for (int t = 1; t < workers; ++t) threads.emplace_back(run);
    run();
    for (auto& t : threads) t.join();
}

}  // namespace mf
