#pragma once

#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace leakguard {

// Worker count for the OpenMP kernels. LEAKGUARD_THREADS overrides the
// OpenMP default; a value of 1 runs the serial reference path.
inline int worker_count() {
    if (const char* env = std::getenv("LEAKGUARD_THREADS")) {
        int v = std::atoi(env);
        if (v > 0) return v;
    }
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

// Independent iterations writing to disjoint slots. Results must not depend
// on the thread count; tests compare threads=1 against the parallel path.
template <typename F>
void parallel_for(int n, F&& body, int threads = -1) {
    if (threads <= 0) threads = worker_count();
#ifdef _OPENMP
    if (threads > 1) {
#pragma omp parallel for schedule(static) num_threads(threads)
        for (int i = 0; i < n; ++i) body(i);
        return;
    }
#endif
    for (int i = 0; i < n; ++i) body(i);
}

}  // namespace leakguard
