// core/include/mgf/parallel.hpp
//
// Tiny worker helper for batch data preparation. Results must not depend on
// scheduling: every task writes only its own slot and draws randomness from
// seeds derived outside the worker. MGF_THREADS caps the worker count.

#ifndef MGF_PARALLEL_HPP_
#define MGF_PARALLEL_HPP_

#include <cstdint>
#include <functional>

namespace mgf {

// Worker cap: min(MGF_THREADS if set, hardware concurrency), at least 1.
int worker_threads();

// Runs fn(i) for i in [0, n). Falls back to an inline loop when a single
// worker is available. fn must be safe to run concurrently for distinct i.
void parallel_for(int64_t n, const std::function<void(int64_t)>& fn);

}  // namespace mgf

#endif  // MGF_PARALLEL_HPP_
