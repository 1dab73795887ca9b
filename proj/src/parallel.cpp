#include "ct/parallel.hpp"

#include <chrono>

namespace ct {

namespace {
int g_max_threads = -1;  // -1: not resolved yet

int resolve_default() {
#ifdef _OPENMP
  int hw = omp_get_max_threads();
#else
  int hw = 1;
#endif
  if (const char* env = std::getenv("CS_THREADS")) {
    int cap = std::atoi(env);
    if (cap > 0) return std::min(cap, hw);
  }
  return hw;
}
}  // namespace

int max_threads() {
  if (g_max_threads < 0) g_max_threads = resolve_default();
  return g_max_threads;
}

void set_max_threads(int n) { g_max_threads = n > 0 ? n : -1; }

double wall_seconds() {
  using clock = std::chrono::steady_clock;
  static const clock::time_point t0 = clock::now();
  return std::chrono::duration<double>(clock::now() - t0).count();
}

}  // namespace ct
