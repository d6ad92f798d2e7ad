// Copyright 2026 The shotnet Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

namespace shotnet {

/// Number of worker threads used by kernels (default 1).
///
/// Kernels only parallelize over indices whose outputs are disjoint and whose
/// per-index arithmetic does not depend on the thread that runs it, so
/// results are bit-identical for any thread count.
void set_num_threads(int threads);
int num_threads();

/// Runs fn(i) for every i in [0, count). Blocks until all calls return.
/// Exceptions thrown by fn are rethrown on the calling thread (first one wins).
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn);

}  // namespace shotnet
