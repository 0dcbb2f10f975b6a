#pragma once

namespace mam {

// Caps the worker parallelism from the MAM_THREADS environment variable
// (hardware concurrency when unset) and points Eigen's GEMM at it. Call once
// at process start; returns the thread count in effect.
int configure_threads();

}  // namespace mam
