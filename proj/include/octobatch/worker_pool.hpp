#pragma once

#include <condition_variable>
#include <cstddef>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace octobatch {

// Fixed set of threads that execute index-parallel jobs. The calling thread
// participates, so a pool of size 1 spawns nothing and runs inline.
class WorkerPool {
 public:
  explicit WorkerPool(unsigned threads = 0);
  ~WorkerPool();

  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  unsigned size() const { return static_cast<unsigned>(workers_.size()) + 1; }

  // Calls fn(t) for every t in [0, tasks) and blocks until all complete.
  // Concurrent calls from different threads are serialized.
  void run(std::size_t tasks, const std::function<void(std::size_t)>& fn);

  static unsigned default_threads();

 private:
  void worker_loop();
  void drain();

  std::vector<std::thread> workers_;
  std::mutex submit_mutex_;
  std::mutex mutex_;
  std::condition_variable wake_;
  std::condition_variable done_;
  const std::function<void(std::size_t)>* job_ = nullptr;
  std::size_t tasks_ = 0;
  std::size_t next_ = 0;
  std::size_t finished_ = 0;
  std::size_t generation_ = 0;
  bool stopping_ = false;
};

}  // namespace octobatch
