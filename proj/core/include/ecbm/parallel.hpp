// Copyright 2026 The ECBM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

namespace ecbm {

/// Worker count: ECBM_THREADS if set and positive, else the hardware count.
std::size_t worker_count();

/// Calls fn(i) for i in [0, n) over worker_count() threads. Each index runs
/// exactly once; the first exception thrown is rethrown after all workers
/// join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace ecbm
