// Copyright 2026 The blendsplat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <condition_variable>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace blendsplat {

/// Persistent worker pool with a blocking parallel_for. Work items must write
/// disjoint outputs; results are then independent of the thread count.
/// Concurrent callers are serialized.
class ThreadPool {
 public:
  explicit ThreadPool(int threads = 0) { start(threads); }
  ~ThreadPool() { stop(); }
  ThreadPool(const ThreadPool&) = delete;
  ThreadPool& operator=(const ThreadPool&) = delete;

  int num_threads() const noexcept { return static_cast<int>(workers_.size()) + 1; }

  void resize(int threads) {
    std::lock_guard call_lock(call_mutex_);
    stop();
    start(threads);
  }

  /// Calls fn(i) for i in [0, n); chunks of `grain` items are claimed dynamically.
  void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, std::size_t grain = 1) {
    if (n == 0) return;
    grain = std::max<std::size_t>(grain, 1);
    if (workers_.empty() || n <= grain) {
      for (std::size_t i = 0; i < n; ++i) fn(i);
      return;
    }
    std::lock_guard call_lock(call_mutex_);
    {
      std::lock_guard lock(mutex_);
      job_ = &fn;
      job_size_ = n;
      job_grain_ = grain;
      next_ = 0;
      active_ = static_cast<int>(workers_.size());
      error_ = nullptr;
      ++generation_;
    }
    wake_.notify_all();
    run_chunks();
    std::unique_lock lock(mutex_);
    done_.wait(lock, [&] { return active_ == 0; });
    job_ = nullptr;
    if (error_) std::rethrow_exception(error_);
  }

  static ThreadPool& global() {
    static ThreadPool pool(0);
    return pool;
  }

 private:
  void start(int threads) {
    if (threads <= 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    quit_ = false;
    for (int i = 1; i < threads; ++i) workers_.emplace_back([this] { worker_loop(); });
  }

  void stop() {
    {
      std::lock_guard lock(mutex_);
      quit_ = true;
    }
    wake_.notify_all();
    for (auto& w : workers_) w.join();
    workers_.clear();
  }

  void run_chunks() {
    for (;;) {
      std::size_t begin;
      {
        std::lock_guard lock(mutex_);
        if (next_ >= job_size_) return;
        begin = next_;
        next_ = std::min(job_size_, next_ + job_grain_);
      }
      const std::size_t end = std::min(job_size_, begin + job_grain_);
      try {
        for (std::size_t i = begin; i < end; ++i) (*job_)(i);
      } catch (...) {
        std::lock_guard lock(mutex_);
        if (!error_) error_ = std::current_exception();
        next_ = job_size_;
      }
    }
  }

  void worker_loop() {
    std::size_t seen = 0;
    for (;;) {
      {
        std::unique_lock lock(mutex_);
        wake_.wait(lock, [&] { return quit_ || generation_ != seen; });
        if (quit_) return;
        seen = generation_;
      }
      run_chunks();
      {
        std::lock_guard lock(mutex_);
        if (--active_ == 0) done_.notify_all();
      }
    }
  }

  std::vector<std::thread> workers_;
  std::mutex call_mutex_;
  std::mutex mutex_;
  std::condition_variable wake_;
  std::condition_variable done_;
  const std::function<void(std::size_t)>* job_ = nullptr;
  std::size_t job_size_ = 0;
  std::size_t job_grain_ = 1;
  std::size_t next_ = 0;
  std::size_t generation_ = 0;
  int active_ = 0;
  bool quit_ = false;
  std::exception_ptr error_;
};

inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, std::size_t grain = 1) {
  ThreadPool::global().parallel_for(n, fn, grain);
}

inline void set_num_threads(int threads) { ThreadPool::global().resize(threads); }

}  // namespace blendsplat
