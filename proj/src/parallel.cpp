#include "gshs/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace gshs {

void parallel_chunks(std::size_t n, std::size_t chunk_count,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
    if (n == 0) return;
    chunk_count = std::min(chunk_count, n);
    const std::size_t per = (n + chunk_count - 1) / chunk_count;

    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const std::size_t workers = std::min<std::size_t>(hw, chunk_count);

    if (workers <= 1) {
        for (std::size_t c = 0; c < chunk_count; ++c) {
            const std::size_t begin = c * per;
            const std::size_t end = std::min(n, begin + per);
            if (begin < end) fn(c, begin, end);
        }
        return;
    }

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t c = next.fetch_add(1);
            if (c >= chunk_count) return;
            const std::size_t begin = c * per;
            const std::size_t end = std::min(n, begin + per);
            if (begin < end) fn(c, begin, end);
        }
    };
    std::vector<std::thread> threads;
    threads.reserve(workers - 1);
    for (std::size_t i = 0; i + 1 < workers; ++i) threads.emplace_back(worker);
    worker();
    for (auto& t : threads) t.join();
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    parallel_chunks(n, static_cast<std::size_t>(hw) * 4,
                    [&](std::size_t, std::size_t begin, std::size_t end) {
                        for (std::size_t i = begin; i < end; ++i) fn(i);
                    });
}

}  // namespace gshs
