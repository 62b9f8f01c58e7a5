#pragma once

#include <cstddef>
#include <functional>

namespace surro {

/// Worker cap used by parallel_for when no explicit count is given.
int default_threads();
void set_default_threads(int threads);

/// Runs body(i) for i in [0, n) on up to `threads` workers (0 = default).
/// Work items must write to disjoint outputs; results never depend on the
/// number of workers. The first exception thrown by a body is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body, int threads = 0);

}  // namespace surro
