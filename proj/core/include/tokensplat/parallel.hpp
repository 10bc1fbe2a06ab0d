// Copyright 2026 The tokensplat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

namespace tokensplat {

/// Worker count from TOKENSPLAT_THREADS (default 1, clamped to [1, 256]).
int thread_count();

/// Splits [begin, end) into contiguous chunks, one per worker, and calls
/// fn(chunk_begin, chunk_end, worker). Runs inline with a single worker.
void parallel_for(std::size_t begin, std::size_t end,
                  const std::function<void(std::size_t, std::size_t, int)>& fn);

}  // namespace tokensplat
