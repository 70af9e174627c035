// Copyright 2026 The EdgeEar Authors
// SPDX-License-Identifier: Apache-2.0

#include "edgeear/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace edgeear {

namespace {

std::size_t default_threads() {
  std::size_t hw = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("EDGEEAR_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return std::min<std::size_t>(static_cast<std::size_t>(v), hw);
    } catch (...) {
    }
  }
  return hw;
}

std::atomic<std::size_t> g_override{0};

}  // namespace

std::size_t thread_count() {
  static const std::size_t kDefault = default_threads();
  const std::size_t o = g_override.load();
  return o ? o : kDefault;
}

void set_thread_count(std::size_t n) { g_override.store(n); }

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body,
                  std::size_t min_chunk) {
  if (n == 0) return;
  const std::size_t workers =
      std::min(thread_count(), std::max<std::size_t>(1, n / std::max<std::size_t>(1, min_chunk)));
  if (workers <= 1) {
    body(0, n);
    return;
  }
  const std::size_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    if (begin >= n) break;
    pool.emplace_back([&body, begin, end = std::min(n, begin + chunk)] { body(begin, end); });
  }
  body(0, std::min(n, chunk));
  for (auto& t : pool) t.join();
}

}  // namespace edgeear
