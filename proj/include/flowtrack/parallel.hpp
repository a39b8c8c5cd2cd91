#pragma once

namespace flowtrack {

/// Number of threads OpenMP parallel regions will use (1 when built
/// without OpenMP).
int max_threads();

/// Number of processors available to this process (1 without OpenMP).
/// Speedups are bounded by this, not by max_threads().
int num_procs();

/// Caps the OpenMP thread count; n <= 0 leaves the runtime default.
void set_threads(int n);

}  // namespace flowtrack
