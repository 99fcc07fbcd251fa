#pragma once

#include <functional>
#include <thread>
#include <vector>

namespace adgen {

// Static contiguous partition: item -> thread mapping depends only on (n,
// threads), so results are reproducible for a fixed thread count.
inline void parallel_for(int n, int threads, const std::function<void(int item, int thread_id)>& fn) {
    if (threads <= 1 || n <= 1) {
        for (int i = 0; i < n; ++i) fn(i, 0);
        return;
    }
    const int t = std::min(threads, n);
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(t));
    for (int j = 0; j < t; ++j) {
        const int begin = static_cast<int>(static_cast<int64_t>(j) * n / t);
        const int end = static_cast<int>(static_cast<int64_t>(j + 1) * n / t);
        pool.emplace_back([begin, end, j, &fn] {
            for (int i = begin; i < end; ++i) fn(i, j);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace adgen
