#pragma once

#include <algorithm>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace censavg {

inline int default_thread_count() {
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

// Static block partition of [begin, end). Each index is processed exactly
// once; the work function must only write to its own slot, which keeps the
// result independent of the schedule. The first exception wins.
template <typename Fn>
void parallel_for(int begin, int end, int threads, Fn&& fn) {
    const int count = end - begin;
    if (count <= 0) return;
    threads = std::clamp(threads, 1, count);
    if (threads == 1) {
        for (int i = begin; i < end; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    std::exception_ptr first_error;
    std::mutex error_mutex;
    const int chunk = (count + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
        const int lo = begin + t * chunk;
        const int hi = std::min(end, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&, lo, hi] {
            try {
                for (int i = lo; i < hi; ++i) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace censavg
