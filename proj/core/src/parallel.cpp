// Copyright 2026 The shotnet Authors.
// SPDX-License-Identifier: Apache-2.0

#include "shotnet/parallel.hpp"

#include <atomic>
#include <condition_variable>
#include <exception>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

#include "shotnet/error.hpp"

namespace shotnet {
namespace {

thread_local bool t_in_parallel = false;

class WorkerPool {
 public:
  explicit WorkerPool(int threads) {
    for (int i = 1; i < threads; ++i) workers_.emplace_back([this] { loop(); });
  }

  ~WorkerPool() {
    {
      std::lock_guard lock(mu_);
      stop_ = true;
    }
    wake_.notify_all();
    for (auto& w : workers_) w.join();
  }

  int size() const { return static_cast<int>(workers_.size()) + 1; }

  void run(std::size_t count, const std::function<void(std::size_t)>& fn) {
    std::unique_lock lock(mu_);
    job_ = &fn;
    count_ = count;
    next_.store(0);
    pending_ = workers_.size();
    error_ = nullptr;
    ++generation_;
    lock.unlock();
    wake_.notify_all();

    drain();

    lock.lock();
    done_.wait(lock, [this] { return pending_ == 0; });
    job_ = nullptr;
    if (error_) std::rethrow_exception(error_);
  }

 private:
  void drain() {
    for (;;) {
      const std::size_t i = next_.fetch_add(1);
      if (i >= count_) return;
      try {
        t_in_parallel = true;
        (*job_)(i);
        t_in_parallel = false;
      } catch (...) {
        t_in_parallel = false;
        std::lock_guard lock(err_mu_);
        if (!error_) error_ = std::current_exception();
        next_.store(count_);
      }
    }
  }

  void loop() {
    std::uint64_t seen = 0;
    for (;;) {
      std::unique_lock lock(mu_);
      wake_.wait(lock, [&] { return stop_ || generation_ != seen; });
      if (stop_) return;
      seen = generation_;
      lock.unlock();
      drain();
      lock.lock();
      if (--pending_ == 0) done_.notify_one();
    }
  }

  std::vector<std::thread> workers_;
  std::mutex mu_;
  std::mutex err_mu_;
  std::condition_variable wake_;
  std::condition_variable done_;
  const std::function<void(std::size_t)>* job_ = nullptr;
  std::size_t count_ = 0;
  std::atomic<std::size_t> next_{0};
  std::size_t pending_ = 0;
  std::uint64_t generation_ = 0;
  std::exception_ptr error_;
  bool stop_ = false;
};

std::mutex g_pool_mu;
std::unique_ptr<WorkerPool> g_pool;
int g_threads = 1;

}  // namespace

void set_num_threads(int threads) {
  if (threads < 1) throw ConfigError("thread count must be >= 1, got " + std::to_string(threads));
  std::lock_guard lock(g_pool_mu);
  if (threads == g_threads) return;
  g_pool.reset();
  g_threads = threads;
  if (threads > 1) g_pool = std::make_unique<WorkerPool>(threads);
}

int num_threads() { return g_threads; }

void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn) {
  if (count == 0) return;
  if (g_threads == 1 || count == 1 || !g_pool || t_in_parallel) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::lock_guard lock(g_pool_mu);  // nested/concurrent callers serialize
  g_pool->run(count, fn);
}

}  // namespace shotnet
