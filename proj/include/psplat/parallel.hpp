#pragma once

#include <algorithm>
#include <functional>
#include <thread>
#include <vector>

namespace psplat {

// Splits [0, count) into contiguous chunks, one worker thread per chunk.
// fn(worker, begin, end) must not touch rows outside its range; outputs are
// then independent of the worker count.
inline void parallel_chunks(int count, int threads,
                            const std::function<void(int, int, int)>& fn) {
    threads = std::max(1, std::min(threads, count));
    if (threads <= 1) {
        if (count > 0) fn(0, 0, count);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(threads);
    const int base = count / threads;
    const int extra = count % threads;
    int begin = 0;
    for (int w = 0; w < threads; ++w) {
        const int len = base + (w < extra ? 1 : 0);
        const int end = begin + len;
        pool.emplace_back(fn, w, begin, end);
        begin = end;
    }
    for (auto& t : pool) t.join();
}

}  // namespace psplat
