#include <immintrin.h>

#include <cstdint>
#include <limits>

#include "cavesim/kernels.hpp"

// AVX2 variants. Only mul/add and min/max reductions are used so every lane
// computes bit-identical values to the scalar reference; the first-index
// tie-break is reproduced by tracking per-lane first occurrences.

namespace cavesim::kernels::detail {

namespace {

double hmin(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  __m128d m = _mm_min_pd(lo, hi);
  m = _mm_min_sd(m, _mm_unpackhi_pd(m, m));
  return _mm_cvtsd_f64(m);
}

double hmax(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  __m128d m = _mm_max_pd(lo, hi);
  m = _mm_max_sd(m, _mm_unpackhi_pd(m, m));
  return _mm_cvtsd_f64(m);
}

}  // namespace

MinResult min_dist_sq_avx2(double px, double py, double pz, const double* xs, const double* ys,
                           const double* zs, size_t n) {
  MinResult result{std::numeric_limits<double>::infinity(), SIZE_MAX};

  const size_t vec_n = n & ~size_t(3);
  if (vec_n) {
    const __m256d vpx = _mm256_set1_pd(px);
    const __m256d vpy = _mm256_set1_pd(py);
    const __m256d vpz = _mm256_set1_pd(pz);
    __m256d best = _mm256_set1_pd(std::numeric_limits<double>::infinity());
    __m256i best_idx = _mm256_set1_epi64x(-1);
    __m256i idx = _mm256_setr_epi64x(0, 1, 2, 3);
    const __m256i idx_step = _mm256_set1_epi64x(4);

    for (size_t i = 0; i < vec_n; i += 4) {
      const __m256d dx = _mm256_sub_pd(_mm256_loadu_pd(xs + i), vpx);
      const __m256d dy = _mm256_sub_pd(_mm256_loadu_pd(ys + i), vpy);
      const __m256d dz = _mm256_sub_pd(_mm256_loadu_pd(zs + i), vpz);
      const __m256d d = _mm256_add_pd(_mm256_add_pd(_mm256_mul_pd(dx, dx), _mm256_mul_pd(dy, dy)),
                                      _mm256_mul_pd(dz, dz));
      const __m256d lt = _mm256_cmp_pd(d, best, _CMP_LT_OQ);
      best = _mm256_blendv_pd(best, d, lt);
      best_idx = _mm256_castpd_si256(
          _mm256_blendv_pd(_mm256_castsi256_pd(best_idx), _mm256_castsi256_pd(idx), lt));
      idx = _mm256_add_epi64(idx, idx_step);
    }

    alignas(32) double lane_best[4];
    alignas(32) int64_t lane_idx[4];
    _mm256_store_pd(lane_best, best);
    _mm256_store_si256(reinterpret_cast<__m256i*>(lane_idx), best_idx);
    const double vmin = hmin(best);
    if (vmin < result.dist_sq) {
      result.dist_sq = vmin;
      size_t first = SIZE_MAX;
      for (int lane = 0; lane < 4; ++lane) {
        if (lane_best[lane] == vmin && static_cast<size_t>(lane_idx[lane]) < first) {
          first = static_cast<size_t>(lane_idx[lane]);
        }
      }
      result.index = first;
    }
  }

  for (size_t i = vec_n; i < n; ++i) {
    const double dx = xs[i] - px;
    const double dy = ys[i] - py;
    const double dz = zs[i] - pz;
    const double d = dx * dx + dy * dy + dz * dz;
    if (d < result.dist_sq) {
      result.dist_sq = d;
      result.index = i;
    }
  }
  return result;
}

double max_step_sq_avx2(const double* xs, const double* ys, const double* zs, size_t n) {
  if (n < 2) return 0.0;
  const size_t steps = n - 1;
  const size_t vec_steps = steps & ~size_t(3);
  double best = 0.0;
  if (vec_steps) {
    __m256d vbest = _mm256_setzero_pd();
    for (size_t i = 0; i < vec_steps; i += 4) {
      const __m256d dx = _mm256_sub_pd(_mm256_loadu_pd(xs + i + 1), _mm256_loadu_pd(xs + i));
      const __m256d dy = _mm256_sub_pd(_mm256_loadu_pd(ys + i + 1), _mm256_loadu_pd(ys + i));
      const __m256d dz = _mm256_sub_pd(_mm256_loadu_pd(zs + i + 1), _mm256_loadu_pd(zs + i));
      const __m256d d = _mm256_add_pd(_mm256_add_pd(_mm256_mul_pd(dx, dx), _mm256_mul_pd(dy, dy)),
                                      _mm256_mul_pd(dz, dz));
      vbest = _mm256_max_pd(vbest, d);
    }
    best = hmax(vbest);
  }
  for (size_t i = vec_steps; i < steps; ++i) {
    const double dx = xs[i + 1] - xs[i];
    const double dy = ys[i + 1] - ys[i];
    const double dz = zs[i + 1] - zs[i];
    const double d = dx * dx + dy * dy + dz * dz;
    if (d > best) best = d;
  }
  return best;
}

bool any_within_sq_avx2(double px, double py, double pz, const double* xs, const double* ys,
                        const double* zs, size_t n, double r_sq) {
  const size_t vec_n = n & ~size_t(3);
  const __m256d vpx = _mm256_set1_pd(px);
  const __m256d vpy = _mm256_set1_pd(py);
  const __m256d vpz = _mm256_set1_pd(pz);
  const __m256d vr = _mm256_set1_pd(r_sq);
  for (size_t i = 0; i < vec_n; i += 4) {
    const __m256d dx = _mm256_sub_pd(_mm256_loadu_pd(xs + i), vpx);
    const __m256d dy = _mm256_sub_pd(_mm256_loadu_pd(ys + i), vpy);
    const __m256d dz = _mm256_sub_pd(_mm256_loadu_pd(zs + i), vpz);
    const __m256d d = _mm256_add_pd(_mm256_add_pd(_mm256_mul_pd(dx, dx), _mm256_mul_pd(dy, dy)),
                                    _mm256_mul_pd(dz, dz));
    if (_mm256_movemask_pd(_mm256_cmp_pd(d, vr, _CMP_LE_OQ)) != 0) return true;
  }
  for (size_t i = vec_n; i < n; ++i) {
    const double dx = xs[i] - px;
    const double dy = ys[i] - py;
    const double dz = zs[i] - pz;
    if (dx * dx + dy * dy + dz * dz <= r_sq) return true;
  }
  return false;
}

}  // namespace cavesim::kernels::detail
