#pragma once

#include <algorithm>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <mutex>
#include <thread>
#include <utility>
#include <vector>

namespace cardionl {

// Shared worker pool for data-parallel kernels.
//
// Work is split into one contiguous chunk per worker, with the split
// determined only by (n, workers).  Reductions combine per-chunk partial
// results in chunk order, so results are bit-identical across runs at a
// fixed worker count.
class ThreadPool {
 public:
  static ThreadPool& instance() {
    static ThreadPool pool;
    return pool;
  }

  void set_workers(int n) {
    if (n < 1) n = 1;
    std::unique_lock<std::mutex> lock(mu_);
    if (n == workers_) return;
    stop_locked(lock);
    workers_ = n;
    start_locked();
  }

  int workers() const { return workers_; }

  // body(chunk, begin, end) is invoked once per chunk; chunk 0 runs on the
  // calling thread.
  void run(std::size_t n, const std::function<void(int, std::size_t, std::size_t)>& body) {
    const int w = workers_;
    if (w == 1 || n < kGrain) {
      body(0, 0, n);
      return;
    }
    std::unique_lock<std::mutex> lock(mu_);
    job_ = &body;
    job_n_ = n;
    pending_ = w - 1;
    ++epoch_;
    cv_work_.notify_all();
    lock.unlock();

    auto [b, e] = chunk_range(n, w, 0);
    body(0, b, e);

    lock.lock();
    cv_done_.wait(lock, [&] { return pending_ == 0; });
    job_ = nullptr;
  }

  static std::pair<std::size_t, std::size_t> chunk_range(std::size_t n, int chunks, int c) {
    const std::size_t base = n / static_cast<std::size_t>(chunks);
    const std::size_t rem = n % static_cast<std::size_t>(chunks);
    const std::size_t b = static_cast<std::size_t>(c) * base + std::min<std::size_t>(c, rem);
    const std::size_t e = b + base + (static_cast<std::size_t>(c) < rem ? 1 : 0);
    return {b, e};
  }

  ~ThreadPool() {
    std::unique_lock<std::mutex> lock(mu_);
    stop_locked(lock);
  }

 private:
  static constexpr std::size_t kGrain = 4096;  // below this, stay serial

  ThreadPool() = default;

  void start_locked() {
    quit_ = false;
    for (int c = 1; c < workers_; ++c) {
      threads_.emplace_back([this, c] { worker_loop(c); });
    }
  }

  void stop_locked(std::unique_lock<std::mutex>& lock) {
    quit_ = true;
    ++epoch_;
    cv_work_.notify_all();
    std::vector<std::thread> ts;
    ts.swap(threads_);
    lock.unlock();
    for (auto& t : ts) t.join();
    lock.lock();
  }

  void worker_loop(int c) {
    std::uint64_t seen = 0;
    for (;;) {
      const std::function<void(int, std::size_t, std::size_t)>* job = nullptr;
      std::size_t n = 0;
      {
        std::unique_lock<std::mutex> lock(mu_);
        cv_work_.wait(lock, [&] { return epoch_ != seen; });
        seen = epoch_;
        if (quit_) return;
        job = job_;
        n = job_n_;
      }
      if (job) {
        auto [b, e] = chunk_range(n, workers_, c);
        (*job)(c, b, e);
        std::unique_lock<std::mutex> lock(mu_);
        if (--pending_ == 0) cv_done_.notify_one();
      }
    }
  }

  std::mutex mu_;
  std::condition_variable cv_work_, cv_done_;
  std::vector<std::thread> threads_;
  const std::function<void(int, std::size_t, std::size_t)>* job_ = nullptr;
  std::size_t job_n_ = 0;
  int pending_ = 0;
  std::uint64_t epoch_ = 0;
  int workers_ = 1;
  bool quit_ = false;
};

template <class F>
inline void parallel_for(std::size_t n, F&& f) {
  ThreadPool::instance().run(n, [&](int, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) f(i);
  });
}

// Deterministic sum reduction: partials are combined in chunk order.
template <class F>
inline double parallel_sum(std::size_t n, F&& term) {
  ThreadPool& pool = ThreadPool::instance();
  const int w = pool.workers();
  std::vector<double> partial(static_cast<std::size_t>(w), 0.0);
  pool.run(n, [&](int c, std::size_t b, std::size_t e) {
    double s = 0.0;
    for (std::size_t i = b; i < e; ++i) s += term(i);
    partial[static_cast<std::size_t>(c)] = s;
  });
  double s = 0.0;
  for (double p : partial) s += p;
  return s;
}

}  // namespace cardionl
