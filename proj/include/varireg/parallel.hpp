#ifndef VARIREG_PARALLEL_HPP
#define VARIREG_PARALLEL_HPP

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace varireg {

// Thread count used by the per-curve loops. 0 means "ask the environment".
inline std::atomic<unsigned>& thread_setting() {
  static std::atomic<unsigned> n{0};
  return n;
}

inline void set_threads(unsigned n) { thread_setting().store(n); }

namespace detail {
// Set inside worker threads; nested loops then run serially.
inline bool& in_worker() {
  thread_local bool flag = false;
  return flag;
}
}  // namespace detail

inline unsigned threads() {
  unsigned n = thread_setting().load();
  if (n > 0) return n;
  if (const char* env = std::getenv("VARIREG_THREADS")) {
    int v = std::atoi(env);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return 1;
}

/// Runs body(i) for i in [0, n). Each index must write only its own output
/// slot; results are then independent of the thread count. The first
/// exception (lowest index) is rethrown.
template <class Body>
void parallel_for(std::size_t n, Body&& body) {
  const unsigned nt = std::min<std::size_t>(threads(), n);
  if (nt <= 1 || detail::in_worker()) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex m;
  std::exception_ptr first;
  std::size_t first_index = n;
  auto worker = [&] {
    detail::in_worker() = true;
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(m);
        if (i < first_index) {
          first_index = i;
          first = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(nt);
  for (unsigned t = 0; t < nt; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (first) std::rethrow_exception(first);
}

}  // namespace varireg

#endif  // VARIREG_PARALLEL_HPP
