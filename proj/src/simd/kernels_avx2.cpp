// Compiled with -mavx2 -mfma; only reached through the runtime dispatcher
// after a CPUID check.

#include <immintrin.h>

#include <algorithm>

#include "chainnet/simd/kernels.hpp"

namespace chainnet::simd::avx2 {
namespace {

template <class T>
struct Vec;

template <>
struct Vec<float> {
  using reg = __m256;
  static constexpr std::size_t width = 8;
  static reg load(const float* p) { return _mm256_loadu_ps(p); }
  static void store(float* p, reg v) { _mm256_storeu_ps(p, v); }
  static reg set1(float x) { return _mm256_set1_ps(x); }
  static reg zero() { return _mm256_setzero_ps(); }
  static reg fmadd(reg a, reg b, reg c) { return _mm256_fmadd_ps(a, b, c); }
  static reg fnmadd(reg a, reg b, reg c) { return _mm256_fnmadd_ps(a, b, c); }
  static reg mul(reg a, reg b) { return _mm256_mul_ps(a, b); }
  static reg add(reg a, reg b) { return _mm256_add_ps(a, b); }
  static reg max(reg a, reg b) { return _mm256_max_ps(a, b); }
  static reg ge_zero_mask(reg x) { return _mm256_cmp_ps(x, zero(), _CMP_GE_OQ); }
  static reg and_(reg a, reg b) { return _mm256_and_ps(a, b); }
};

template <>
struct Vec<double> {
  using reg = __m256d;
  static constexpr std::size_t width = 4;
  static reg load(const double* p) { return _mm256_loadu_pd(p); }
  static void store(double* p, reg v) { _mm256_storeu_pd(p, v); }
  static reg set1(double x) { return _mm256_set1_pd(x); }
  static reg zero() { return _mm256_setzero_pd(); }
  static reg fmadd(reg a, reg b, reg c) { return _mm256_fmadd_pd(a, b, c); }
  static reg fnmadd(reg a, reg b, reg c) { return _mm256_fnmadd_pd(a, b, c); }
  static reg mul(reg a, reg b) { return _mm256_mul_pd(a, b); }
  static reg add(reg a, reg b) { return _mm256_add_pd(a, b); }
  static reg max(reg a, reg b) { return _mm256_max_pd(a, b); }
  static reg ge_zero_mask(reg x) { return _mm256_cmp_pd(x, zero(), _CMP_GE_OQ); }
  static reg and_(reg a, reg b) { return _mm256_and_pd(a, b); }
};

constexpr std::size_t kRowTile = 6;
// Reduction block: keeps the A rows and the B panel of one pass in L2.
constexpr std::size_t kDepthBlock = 256;

// Register-blocked tile: MR rows of C by NV vectors of columns, reduced over
// the full k extent in order.
template <class T, std::size_t MR, std::size_t NV>
inline void tile(std::size_t k, const T* a, std::size_t a_rs, std::size_t a_cs, const T* b,
                 std::size_t ldb, T* c, std::size_t ldc) {
  using V = Vec<T>;
  constexpr std::size_t W = V::width;
  typename V::reg acc[MR][NV];
#pragma GCC unroll 8
  for (std::size_t r = 0; r < MR; ++r)
#pragma GCC unroll 4
    for (std::size_t v = 0; v < NV; ++v) acc[r][v] = V::load(c + r * ldc + v * W);

  for (std::size_t p = 0; p < k; ++p) {
    const T* brow = b + p * ldb;
    typename V::reg bv[NV];
#pragma GCC unroll 4
    for (std::size_t v = 0; v < NV; ++v) bv[v] = V::load(brow + v * W);
    const T* acol = a + p * a_cs;
#pragma GCC unroll 8
    for (std::size_t r = 0; r < MR; ++r) {
      const typename V::reg av = V::set1(acol[r * a_rs]);
#pragma GCC unroll 4
      for (std::size_t v = 0; v < NV; ++v) acc[r][v] = V::fmadd(av, bv[v], acc[r][v]);
    }
  }

#pragma GCC unroll 8
  for (std::size_t r = 0; r < MR; ++r)
#pragma GCC unroll 4
    for (std::size_t v = 0; v < NV; ++v) V::store(c + r * ldc + v * W, acc[r][v]);
}

template <class T, std::size_t NV>
void column_panel(std::size_t m, std::size_t k, const T* a, std::size_t a_rs, std::size_t a_cs,
                  const T* b, std::size_t ldb, T* c, std::size_t ldc) {
  std::size_t i = 0;
  for (; i + kRowTile <= m; i += kRowTile)
    tile<T, kRowTile, NV>(k, a + i * a_rs, a_rs, a_cs, b, ldb, c + i * ldc, ldc);
  const T* ai = a + i * a_rs;
  T* ci = c + i * ldc;
  switch (m - i) {
    case 5: tile<T, 5, NV>(k, ai, a_rs, a_cs, b, ldb, ci, ldc); break;
    case 4: tile<T, 4, NV>(k, ai, a_rs, a_cs, b, ldb, ci, ldc); break;
    case 3: tile<T, 3, NV>(k, ai, a_rs, a_cs, b, ldb, ci, ldc); break;
    case 2: tile<T, 2, NV>(k, ai, a_rs, a_cs, b, ldb, ci, ldc); break;
    case 1: tile<T, 1, NV>(k, ai, a_rs, a_cs, b, ldb, ci, ldc); break;
    default: break;
  }
}

}  // namespace

template <class T>
void gemm(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t a_rs,
          std::size_t a_cs, const T* b, std::size_t ldb, T* c, std::size_t ldc) {
  constexpr std::size_t W = Vec<T>::width;
  // Blocks over k run in increasing order, so every C element still sees
  // its products summed in index order.
  for (std::size_t p0 = 0; p0 < k; p0 += kDepthBlock) {
    const std::size_t kc = std::min(kDepthBlock, k - p0);
    const T* ap = a + p0 * a_cs;
    const T* bp = b + p0 * ldb;
    std::size_t j = 0;
    for (; j + 2 * W <= n; j += 2 * W) column_panel<T, 2>(m, kc, ap, a_rs, a_cs, bp + j, ldb, c + j, ldc);
    for (; j + W <= n; j += W) column_panel<T, 1>(m, kc, ap, a_rs, a_cs, bp + j, ldb, c + j, ldc);
    if (j == n) continue;
    // Ragged right edge (fewer than one vector of columns).
    for (std::size_t i = 0; i < m; ++i) {
      T* crow = c + i * ldc;
      for (std::size_t p = 0; p < kc; ++p) {
        const T aip = ap[i * a_rs + p * a_cs];
        const T* brow = bp + p * ldb;
        for (std::size_t jj = j; jj < n; ++jj) crow[jj] += aip * brow[jj];
      }
    }
  }
}

template <class T>
void axpy(std::size_t n, T alpha, const T* x, T* y) {
  using V = Vec<T>;
  const auto va = V::set1(alpha);
  std::size_t i = 0;
  for (; i + V::width <= n; i += V::width) V::store(y + i, V::fmadd(va, V::load(x + i), V::load(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

template <class T>
void relu(std::size_t n, const T* x, T* y) {
  using V = Vec<T>;
  std::size_t i = 0;
  for (; i + V::width <= n; i += V::width) V::store(y + i, V::max(V::load(x + i), V::zero()));
  for (; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <class T>
void relu_backward(std::size_t n, const T* x, const T* dy, T* dx) {
  using V = Vec<T>;
  std::size_t i = 0;
  for (; i + V::width <= n; i += V::width) {
    const auto pass = V::and_(V::ge_zero_mask(V::load(x + i)), V::load(dy + i));
    V::store(dx + i, V::add(V::load(dx + i), pass));
  }
  for (; i < n; ++i) {
    if (x[i] >= T(0)) dx[i] += dy[i];
  }
}

template <class T>
void sgd_momentum(std::size_t n, T lr, T momentum, const T* g, T* v, T* w) {
  using V = Vec<T>;
  const auto vl = V::set1(lr);
  const auto vm = V::set1(momentum);
  std::size_t i = 0;
  for (; i + V::width <= n; i += V::width) {
    const auto vel = V::fnmadd(vl, V::load(g + i), V::mul(vm, V::load(v + i)));
    V::store(v + i, vel);
    V::store(w + i, V::add(V::load(w + i), vel));
  }
  for (; i < n; ++i) {
    v[i] = momentum * v[i] - lr * g[i];
    w[i] += v[i];
  }
}

#define INSTANTIATE(T)                                                                       \
  template void gemm<T>(std::size_t, std::size_t, std::size_t, const T*, std::size_t,       \
                        std::size_t, const T*, std::size_t, T*, std::size_t);                \
  template void axpy<T>(std::size_t, T, const T*, T*);                                       \
  template void relu<T>(std::size_t, const T*, T*);                                          \
  template void relu_backward<T>(std::size_t, const T*, const T*, T*);                       \
  template void sgd_momentum<T>(std::size_t, T, T, const T*, T*, T*);

INSTANTIATE(float)
INSTANTIATE(double)

#undef INSTANTIATE

}  // namespace chainnet::simd::avx2
