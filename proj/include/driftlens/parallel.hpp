#pragma once

#include <cstddef>
#include <functional>

namespace driftlens {

// Worker cap for parallel_for. 0 means "use hardware concurrency".
void set_thread_count(std::size_t threads);
std::size_t thread_count();

// Runs body(i) for i in [0, n). Jobs must only write to slots they own; the
// caller reduces in index order afterwards, so results do not depend on the
// schedule. If jobs throw, the exception of the lowest failing index is
// rethrown on the calling thread.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace driftlens
