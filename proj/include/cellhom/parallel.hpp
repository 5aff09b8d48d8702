#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace cellhom {

/// Runs body(i) for i in [0, count) on up to `threads` workers using static
/// contiguous chunks. Callers write into per-index slots and reduce in index
/// order afterwards, so results do not depend on the thread count.
template <class Body>
void parallel_for(std::size_t count, int threads, Body &&body) {
    const std::size_t workers =
        std::min<std::size_t>(threads > 1 ? static_cast<std::size_t>(threads) : 1, count);
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    const std::size_t chunk = (count + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t lo = w * chunk, hi = std::min(count, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &body] {
            for (std::size_t i = lo; i < hi; ++i) body(i);
        });
    }
}

} // namespace cellhom
