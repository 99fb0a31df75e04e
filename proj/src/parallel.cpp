#include "mlab/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <thread>
#include <vector>

namespace mlab {

int thread_count() {
  if (const char* e = std::getenv("MLAB_THREADS")) {
    int v = std::atoi(e);
    if (v > 0) return v;
  }
  unsigned h = std::thread::hardware_concurrency();
  return h == 0 ? 1 : int(h);
}

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t, int)>& fn) {
  int T = std::min<std::size_t>(std::size_t(thread_count()), std::max<std::size_t>(n, 1));
  if (T <= 1) {
    fn(0, n, 0);
    return;
  }
  std::vector<std::thread> ws;
  std::vector<std::exception_ptr> errs(T);
  std::size_t chunk = (n + T - 1) / T;
  for (int t = 0; t < T; ++t) {
    std::size_t b = t * chunk, e = std::min(n, b + chunk);
    ws.emplace_back([&, b, e, t] {
      try {
        if (b < e) fn(b, e, t);
      } catch (...) {
        errs[t] = std::current_exception();
      }
    });
  }
  for (auto& w : ws) w.join();
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
}

}  // namespace mlab
