// Copyright 2026 The EdgeEar Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

namespace edgeear {

// Number of worker threads for intra-op loops. Reads EDGEEAR_THREADS once;
// defaults to the hardware concurrency.
std::size_t thread_count();

// Overrides the thread count for the rest of the process (0 restores the
// environment/hardware default).
void set_thread_count(std::size_t n);

// Runs body(begin, end) over disjoint chunks of [0, n). Each index is
// visited exactly once, so loops that write only to index-owned outputs
// produce identical results for any thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body,
                  std::size_t min_chunk = 1);

}  // namespace edgeear
