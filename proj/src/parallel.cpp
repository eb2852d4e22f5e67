#include "mixem/parallel.hpp"

#include <atomic>

namespace mixem {

namespace {
std::atomic<std::size_t> g_threads{0};
}  // namespace

std::size_t default_threads() {
  const std::size_t t = g_threads.load();
  if (t != 0) return t;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

void set_default_threads(std::size_t threads) { g_threads.store(threads); }

}  // namespace mixem
