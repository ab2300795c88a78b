#pragma once

#include <cstddef>
#include <functional>

namespace halbach {

/// Worker count: HALBACH_THREADS if set (≥ 1), otherwise hardware concurrency.
std::size_t worker_count();

/// Runs body(k) for k in [0, n) on up to worker_count() threads. Iterations
/// must write to disjoint outputs; the first exception is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace halbach
