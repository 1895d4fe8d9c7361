#include "cavesim/kernels.hpp"

#include <cstring>
#include <limits>

namespace cavesim::kernels {

namespace detail {

MinResult min_dist_sq_scalar(double px, double py, double pz, const double* xs, const double* ys,
                             const double* zs, size_t n) {
  MinResult r{std::numeric_limits<double>::infinity(), SIZE_MAX};
  for (size_t i = 0; i < n; ++i) {
    const double dx = xs[i] - px;
    const double dy = ys[i] - py;
    const double dz = zs[i] - pz;
    const double d = dx * dx + dy * dy + dz * dz;
    if (d < r.dist_sq) {
      r.dist_sq = d;
      r.index = i;
    }
  }
  return r;
}

double max_step_sq_scalar(const double* xs, const double* ys, const double* zs, size_t n) {
  double best = 0.0;
  for (size_t i = 0; i + 1 < n; ++i) {
    const double dx = xs[i + 1] - xs[i];
    const double dy = ys[i + 1] - ys[i];
    const double dz = zs[i + 1] - zs[i];
    const double d = dx * dx + dy * dy + dz * dz;
    if (d > best) best = d;
  }
  return best;
}

bool any_within_sq_scalar(double px, double py, double pz, const double* xs, const double* ys,
                          const double* zs, size_t n, double r_sq) {
  for (size_t i = 0; i < n; ++i) {
    const double dx = xs[i] - px;
    const double dy = ys[i] - py;
    const double dz = zs[i] - pz;
    if (dx * dx + dy * dy + dz * dz <= r_sq) return true;
  }
  return false;
}

}  // namespace detail

namespace {

struct Backend {
  MinResult (*min_dist_sq)(double, double, double, const double*, const double*, const double*,
                           size_t);
  double (*max_step_sq)(const double*, const double*, const double*, size_t);
  bool (*any_within_sq)(double, double, double, const double*, const double*, const double*,
                        size_t, double);
  const char* name;
};

constexpr Backend kScalar{detail::min_dist_sq_scalar, detail::max_step_sq_scalar,
                          detail::any_within_sq_scalar, "scalar"};

#if defined(CAVESIM_HAVE_AVX2_TU)
constexpr Backend kAvx2{detail::min_dist_sq_avx2, detail::max_step_sq_avx2,
                        detail::any_within_sq_avx2, "avx2"};

bool cpu_has_avx2() {
#if defined(__GNUC__) || defined(__clang__)
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}
#endif

Backend pick_default() {
#if defined(CAVESIM_HAVE_AVX2_TU)
  if (cpu_has_avx2()) return kAvx2;
#endif
  return kScalar;
}

Backend g_backend = pick_default();

}  // namespace

MinResult min_dist_sq(double px, double py, double pz, const double* xs, const double* ys,
                      const double* zs, size_t n) {
  return g_backend.min_dist_sq(px, py, pz, xs, ys, zs, n);
}

double max_step_sq(const double* xs, const double* ys, const double* zs, size_t n) {
  return g_backend.max_step_sq(xs, ys, zs, n);
}

bool any_within_sq(double px, double py, double pz, const double* xs, const double* ys,
                   const double* zs, size_t n, double r_sq) {
  return g_backend.any_within_sq(px, py, pz, xs, ys, zs, n, r_sq);
}

const char* active_backend() { return g_backend.name; }

bool select_backend(const char* name) {
  if (std::strcmp(name, "scalar") == 0) {
    g_backend = kScalar;
    return true;
  }
  if (std::strcmp(name, "avx2") == 0) {
#if defined(CAVESIM_HAVE_AVX2_TU)
    if (cpu_has_avx2()) {
      g_backend = kAvx2;
      return true;
    }
#endif
    return false;
  }
  if (std::strcmp(name, "auto") == 0) {
    g_backend = pick_default();
    return true;
  }
  return false;
}

}  // namespace cavesim::kernels
