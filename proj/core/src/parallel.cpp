// Copyright 2026 The tokensplat Authors
// SPDX-License-Identifier: Apache-2.0

#include "tokensplat/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace tokensplat {

int thread_count() {
  const char* env = std::getenv("TOKENSPLAT_THREADS");
  if (!env || !*env) return 1;
  const int n = std::atoi(env);
  return std::clamp(n, 1, 256);
}

void parallel_for(std::size_t begin, std::size_t end, const std::function<void(std::size_t, std::size_t, int)>& fn) {
  if (end <= begin) return;
  const std::size_t total = end - begin;
  const int workers = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(thread_count()), total));
  if (workers <= 1) {
    fn(begin, end, 0);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  const std::size_t chunk = (total + static_cast<std::size_t>(workers) - 1) / static_cast<std::size_t>(workers);
  for (int w = 0; w < workers; ++w) {
    const std::size_t b = begin + chunk * static_cast<std::size_t>(w);
    const std::size_t e = std::min(end, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&fn, b, e, w] { fn(b, e, w); });
  }
}

}  // namespace tokensplat
