#pragma once

#include <cstddef>
#include <functional>

namespace vstorm {

/// Runs body(i) for i in [0, n) on up to `threads` workers. Work items are
/// claimed dynamically, so body must only write to state owned by item i.
/// The first exception thrown by any item is rethrown on the caller.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& body);

}  // namespace vstorm
