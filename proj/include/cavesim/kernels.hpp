#pragma once

#include <cstddef>
#include <cstdint>

// Data-parallel inner loops shared by the KD-tree leaf scans, the brute-force
// nearest-neighbor oracles and the trajectory constraint checks. Each kernel
// has a scalar reference implementation and an AVX2 variant selected once at
// startup; both compute identical IEEE results (mul/add only, no FMA, and only
// order-independent min/max reductions), so the dispatch is equivalence-tested
// exactly.

namespace cavesim::kernels {

struct MinResult {
  double dist_sq;
  size_t index;  // first index attaining dist_sq; SIZE_MAX when n == 0
};

// Minimum squared distance from (px,py,pz) to the structure-of-arrays block.
MinResult min_dist_sq(double px, double py, double pz, const double* xs, const double* ys,
                      const double* zs, size_t n);

// Maximum squared consecutive-step length over a polyline of n points.
// Returns 0 for n < 2.
double max_step_sq(const double* xs, const double* ys, const double* zs, size_t n);

// True if any point of the block lies within squared distance r_sq of p.
bool any_within_sq(double px, double py, double pz, const double* xs, const double* ys,
                   const double* zs, size_t n, double r_sq);

namespace detail {
MinResult min_dist_sq_scalar(double, double, double, const double*, const double*, const double*,
                             size_t);
double max_step_sq_scalar(const double*, const double*, const double*, size_t);
bool any_within_sq_scalar(double, double, double, const double*, const double*, const double*,
                          size_t, double);
#if defined(CAVESIM_HAVE_AVX2_TU)
MinResult min_dist_sq_avx2(double, double, double, const double*, const double*, const double*,
                           size_t);
double max_step_sq_avx2(const double*, const double*, const double*, size_t);
bool any_within_sq_avx2(double, double, double, const double*, const double*, const double*,
                        size_t, double);
#endif
}  // namespace detail

// Name of the active backend: "avx2" or "scalar".
const char* active_backend();

// Force a backend for tests ("scalar", "avx2", "auto"). Returns false if the
// requested backend is unavailable on this machine.
bool select_backend(const char* name);

}  // namespace cavesim::kernels
