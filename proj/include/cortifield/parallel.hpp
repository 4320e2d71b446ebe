// Shared worker pool. Work is always split into chunks whose boundaries are
// fixed by the caller and never depend on the worker count, so any reduction
// that combines per-chunk results in chunk order is bit-identical no matter
// how many jobs run.
#pragma once

#include <cstdint>
#include <functional>

namespace cf {

class ThreadPool {
public:
    // Process-wide pool used by every parallel stage.
    static ThreadPool& global();

    explicit ThreadPool(int jobs = 0);
    ~ThreadPool();
    ThreadPool(const ThreadPool&) = delete;
    ThreadPool& operator=(const ThreadPool&) = delete;

    // jobs <= 0 selects hardware concurrency. Takes effect immediately.
    void set_jobs(int jobs);
    int jobs() const;

    // Runs fn(chunk) for chunk in [0, n_chunks). Blocks until done. Nested
    // calls from inside a worker run inline on the calling thread.
    void run_chunks(int64_t n_chunks, const std::function<void(int64_t)>& fn);

    // Convenience: splits [0, n) into fixed-size ranges and runs
    // fn(begin, end, chunk_index). chunk_size must not depend on jobs().
    void parallel_ranges(int64_t n, int64_t chunk_size,
                         const std::function<void(int64_t, int64_t, int64_t)>& fn);

private:
    struct Impl;
    Impl* impl_;
};

inline void parallel_ranges(int64_t n, int64_t chunk_size,
                            const std::function<void(int64_t, int64_t, int64_t)>& fn) {
    ThreadPool::global().parallel_ranges(n, chunk_size, fn);
}

} // namespace cf
