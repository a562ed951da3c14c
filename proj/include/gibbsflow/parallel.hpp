#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace gibbsflow {

/// Run fn(i) for i in [0, count) across up to `threads` workers.
/// Work is split by index, so writes into per-index slots are deterministic
/// regardless of the thread count.
inline void parallel_for(size_t count, int threads, const std::function<void(size_t)>& fn) {
    if (count == 0) return;
    int t = threads;
    if (t <= 0) t = static_cast<int>(std::thread::hardware_concurrency());
    if (t < 1) t = 1;
    t = static_cast<int>(std::min<size_t>(static_cast<size_t>(t), count));
    if (t == 1) {
        for (size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(t));
    const size_t chunk = (count + static_cast<size_t>(t) - 1) / static_cast<size_t>(t);
    for (int w = 0; w < t; ++w) {
        const size_t begin = static_cast<size_t>(w) * chunk;
        const size_t end = std::min(count, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([&fn, begin, end]() {
            for (size_t i = begin; i < end; ++i) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace gibbsflow
