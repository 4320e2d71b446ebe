#include "cortifield/parallel.hpp"

#include <atomic>
#include <condition_variable>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace cf {

namespace {
thread_local bool t_inside_worker = false;
}

struct ThreadPool::Impl {
    std::mutex mtx;
    std::condition_variable cv_work;
    std::condition_variable cv_done;
    std::vector<std::thread> workers;
    int jobs = 1;
    bool shutting_down = false;

    // Current job; one at a time, guarded by job_mtx on the submit side.
    std::mutex job_mtx;
    uint64_t generation = 0;
    int64_t n_chunks = 0;
    std::atomic<int64_t> next_chunk{0};
    std::atomic<int64_t> chunks_left{0};
    const std::function<void(int64_t)>* fn = nullptr;
    std::exception_ptr first_error;
    std::mutex error_mtx;

    void worker_loop() {
        t_inside_worker = true;
        uint64_t seen = 0;
        for (;;) {
            {
                std::unique_lock<std::mutex> lk(mtx);
                cv_work.wait(lk, [&] { return shutting_down || generation != seen; });
                if (shutting_down) return;
                seen = generation;
            }
            drain();
        }
    }

    void drain() {
        for (;;) {
            const int64_t c = next_chunk.fetch_add(1, std::memory_order_acq_rel);
            if (c >= n_chunks) break;
            try {
                (*fn)(c);
            } catch (...) {
                std::lock_guard<std::mutex> lk(error_mtx);
                if (!first_error) first_error = std::current_exception();
            }
            if (chunks_left.fetch_sub(1, std::memory_order_acq_rel) == 1) {
                std::lock_guard<std::mutex> lk(mtx);
                cv_done.notify_all();
            }
        }
    }

    void resize(int n) {
        {
            std::lock_guard<std::mutex> lk(mtx);
            shutting_down = true;
            cv_work.notify_all();
        }
        for (auto& t : workers) t.join();
        workers.clear();
        shutting_down = false;
        jobs = n;
        for (int i = 0; i < n - 1; ++i) workers.emplace_back([this] { worker_loop(); });
    }
};

ThreadPool& ThreadPool::global() {
    static ThreadPool pool;
    return pool;
}

ThreadPool::ThreadPool(int n) : impl_(new Impl) {
    set_jobs(n);
}

ThreadPool::~ThreadPool() {
    impl_->resize(1);
    delete impl_;
}

void ThreadPool::set_jobs(int n) {
    if (n <= 0) n = static_cast<int>(std::thread::hardware_concurrency());
    if (n < 1) n = 1;
    std::lock_guard<std::mutex> lk(impl_->job_mtx);
    impl_->resize(n);
}

int ThreadPool::jobs() const { return impl_->jobs; }

void ThreadPool::run_chunks(int64_t n_chunks, const std::function<void(int64_t)>& fn) {
    if (n_chunks <= 0) return;
    if (t_inside_worker || n_chunks == 1 || impl_->jobs == 1) {
        for (int64_t c = 0; c < n_chunks; ++c) fn(c);
        return;
    }
    std::lock_guard<std::mutex> submit_lk(impl_->job_mtx);
    impl_->fn = &fn;
    impl_->n_chunks = n_chunks;
    impl_->chunks_left.store(n_chunks, std::memory_order_relaxed);
    impl_->first_error = nullptr;
    // Lagging workers from the previous job spin on next_chunk; publishing it
    // last (release) makes fn/n_chunks/chunks_left visible before any worker
    // can claim a chunk of this job.
    impl_->next_chunk.store(0, std::memory_order_release);
    {
        std::lock_guard<std::mutex> lk(impl_->mtx);
        ++impl_->generation;
        impl_->cv_work.notify_all();
    }
    impl_->drain(); // caller participates
    {
        std::unique_lock<std::mutex> lk(impl_->mtx);
        impl_->cv_done.wait(lk, [&] { return impl_->chunks_left.load(std::memory_order_acquire) == 0; });
    }
    impl_->fn = nullptr;
    if (impl_->first_error) std::rethrow_exception(impl_->first_error);
}

void ThreadPool::parallel_ranges(int64_t n, int64_t chunk_size,
                                 const std::function<void(int64_t, int64_t, int64_t)>& fn) {
    if (n <= 0) return;
    if (chunk_size < 1) chunk_size = 1;
    const int64_t n_chunks = (n + chunk_size - 1) / chunk_size;
    run_chunks(n_chunks, [&](int64_t c) {
        const int64_t begin = c * chunk_size;
        const int64_t end = begin + chunk_size < n ? begin + chunk_size : n;
        fn(begin, end, c);
    });
}

} // namespace cf
