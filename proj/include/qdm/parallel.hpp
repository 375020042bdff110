#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace qdm {

inline int default_workers() {
    unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1 : static_cast<int>(n);
}

// Static block partition of [0, n). Each index is touched by exactly one
// worker and writes only its own output slots, so results do not depend on
// the worker count.
inline void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t, std::size_t)>& body) {
    if (workers <= 0) workers = default_workers();
    std::size_t w = std::min<std::size_t>(static_cast<std::size_t>(workers), n ? n : 1);
    if (w <= 1 || n < 2) {
        body(0, n);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(w);
    std::size_t chunk = (n + w - 1) / w;
    for (std::size_t t = 0; t < w; ++t) {
        std::size_t lo = t * chunk;
        std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&body, lo, hi] { body(lo, hi); });
    }
    for (auto& th : pool) th.join();
}

}  // namespace qdm
