#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace flightpref {

/// Runs fn(begin, end) over contiguous chunks of [0, n) on up to
/// hardware_concurrency threads. Chunks are disjoint, so writes to
/// per-index outputs need no synchronization.
template <typename Fn>
void parallel_for_chunks(std::size_t n, Fn&& fn, std::size_t min_chunk = 16384) {
    const std::size_t hw = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    const std::size_t chunks = std::min(hw, std::max<std::size_t>(1, n / min_chunk));
    if (chunks <= 1) {
        fn(std::size_t{0}, n);
        return;
    }
    std::vector<std::jthread> workers;
    workers.reserve(chunks - 1);
    const std::size_t step = (n + chunks - 1) / chunks;
    for (std::size_t c = 1; c < chunks; ++c) {
        const std::size_t b = c * step, e = std::min(n, b + step);
        if (b < e) workers.emplace_back([&fn, b, e] { fn(b, e); });
    }
    fn(std::size_t{0}, std::min(n, step));
}

}  // namespace flightpref
