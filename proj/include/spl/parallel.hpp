#pragma once

#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <functional>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace spl {

/// Worker count: `SPL_WORKERS` if set to a positive integer, otherwise the hardware concurrency.
inline int default_worker_count() {
    if (const char* env = std::getenv("SPL_WORKERS")) {
        const int value = std::atoi(env);
        if (value > 0) return value;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Pairwise (tree) summation in a fixed order. The result depends only on the input sequence.
inline double pairwise_sum(std::span<const double> values) {
    if (values.empty()) return 0.0;
    if (values.size() <= 8) {
        double acc = 0.0;
        for (double v : values) acc += v;
        return acc;
    }
    const std::size_t half = values.size() / 2;
    return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

/// Evaluates `task(i)` for i in [0, count) on `workers` threads and stores each result in slot i.
/// Tasks are claimed dynamically but every result lands in its own slot, so any reduction over
/// the returned vector is independent of the worker count.
inline std::vector<double> run_indexed(std::size_t count, const std::function<double(std::size_t)>& task,
                                       int workers) {
    std::vector<double> out(count, 0.0);
    if (count == 0) return out;
    const std::size_t nthreads = std::min<std::size_t>(static_cast<std::size_t>(workers < 1 ? 1 : workers), count);
    if (nthreads <= 1) {
        for (std::size_t i = 0; i < count; ++i) out[i] = task(i);
        return out;
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) out[i] = task(i);
    };
    std::vector<std::thread> pool;
    pool.reserve(nthreads - 1);
    for (std::size_t t = 0; t + 1 < nthreads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    return out;
}

/// Sum of `task(i)` over [0, count) with a deterministic reduction.
inline double parallel_sum(std::size_t count, const std::function<double(std::size_t)>& task, int workers) {
    const auto partials = run_indexed(count, task, workers);
    return pairwise_sum(partials);
}

} // namespace spl
