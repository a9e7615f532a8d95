#pragma once

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <functional>
#include <mutex>
#include <queue>
#include <thread>
#include <vector>

namespace skillbench {

// Minimal fixed-size worker pool. parallel_for partitions work into chunks
// whose boundaries depend only on the range and grain, never on the worker
// count, so per-chunk results can be combined in a fixed order.
class ThreadPool {
public:
    explicit ThreadPool(std::size_t workers)
    {
        if (workers == 0)
            workers = 1;
        for (std::size_t i = 0; i < workers; ++i)
            threads_.emplace_back([this] { worker_loop(); });
    }

    ~ThreadPool()
    {
        {
            std::unique_lock lock(mutex_);
            stop_ = true;
        }
        cv_.notify_all();
        for (auto& t : threads_)
            t.join();
    }

    ThreadPool(const ThreadPool&) = delete;
    ThreadPool& operator=(const ThreadPool&) = delete;

    std::size_t size() const { return threads_.size(); }

    /// Runs fn(i) for i in [0, n). Blocks until all items finished.
    void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, std::size_t grain = 1)
    {
        if (n == 0)
            return;
        if (threads_.size() == 1 || n <= grain) {
            for (std::size_t i = 0; i < n; ++i)
                fn(i);
            return;
        }
        if (grain == 0)
            grain = 1;
        const std::size_t num_chunks = (n + grain - 1) / grain;
        std::atomic<std::size_t> remaining{num_chunks};
        std::mutex done_mutex;
        std::condition_variable done_cv;
        {
            std::unique_lock lock(mutex_);
            for (std::size_t c = 0; c < num_chunks; ++c) {
                const std::size_t lo = c * grain;
                const std::size_t hi = std::min(n, lo + grain);
                tasks_.push([&fn, &remaining, &done_mutex, &done_cv, lo, hi] {
                    for (std::size_t i = lo; i < hi; ++i)
                        fn(i);
                    if (remaining.fetch_sub(1) == 1) {
                        std::unique_lock dl(done_mutex);
                        done_cv.notify_all();
                    }
                });
            }
        }
        cv_.notify_all();
        // the calling thread helps drain the queue
        while (true) {
            std::function<void()> task;
            {
                std::unique_lock lock(mutex_);
                if (tasks_.empty())
                    break;
                task = std::move(tasks_.front());
                tasks_.pop();
            }
            task();
        }
        std::unique_lock dl(done_mutex);
        done_cv.wait(dl, [&remaining] { return remaining.load() == 0; });
    }

private:
    void worker_loop()
    {
        while (true) {
            std::function<void()> task;
            {
                std::unique_lock lock(mutex_);
                cv_.wait(lock, [this] { return stop_ || !tasks_.empty(); });
                if (stop_ && tasks_.empty())
                    return;
                task = std::move(tasks_.front());
                tasks_.pop();
            }
            task();
        }
    }

    std::vector<std::thread> threads_;
    std::queue<std::function<void()>> tasks_;
    std::mutex mutex_;
    std::condition_variable cv_;
    bool stop_ = false;
};

} // namespace skillbench
