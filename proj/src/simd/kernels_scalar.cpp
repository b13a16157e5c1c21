#include "chainnet/simd/kernels.hpp"

namespace chainnet::simd::scalar {

template <class T>
void gemm(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t a_rs,
          std::size_t a_cs, const T* b, std::size_t ldb, T* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * ldc;
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = a[i * a_rs + p * a_cs];
      const T* brow = b + p * ldb;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

template <class T>
void axpy(std::size_t n, T alpha, const T* x, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <class T>
void relu(std::size_t n, const T* x, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <class T>
void relu_backward(std::size_t n, const T* x, const T* dy, T* dx) {
  for (std::size_t i = 0; i < n; ++i) {
    if (x[i] >= T(0)) dx[i] += dy[i];
  }
}

template <class T>
void sgd_momentum(std::size_t n, T lr, T momentum, const T* g, T* v, T* w) {
  for (std::size_t i = 0; i < n; ++i) {
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

}  // namespace chainnet::simd::scalar
