#pragma once

#include <cstddef>
#include <functional>

namespace ridnet {

/// Worker count: hardware concurrency, capped by RIDNET_THREADS when set.
std::size_t thread_count();

/// Runs fn(0..n-1) across worker threads. Each index must write only its
/// own outputs; callers reduce in index order afterwards. The first
/// exception (lowest index) is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace ridnet
