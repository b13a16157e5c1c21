#include <atomic>
#include <cstdlib>
#include <string>

#include "chainnet/errors.hpp"
#include "chainnet/simd/kernels.hpp"

namespace chainnet::simd {
namespace {

bool cpu_has_avx2() {
#if defined(CHAINNET_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend initial_backend() {
  const bool avx2 = cpu_has_avx2();
  if (const char* env = std::getenv("CHAINNET_SIMD")) {
    const std::string v = env;
    if (v == "scalar") return Backend::Scalar;
    if (v == "avx2" && avx2) return Backend::Avx2;
  }
  return avx2 ? Backend::Avx2 : Backend::Scalar;
}

std::atomic<Backend>& current() {
  static std::atomic<Backend> backend{initial_backend()};
  return backend;
}

bool use_avx2() {
#if defined(CHAINNET_HAVE_AVX2)
  return current().load(std::memory_order_relaxed) == Backend::Avx2;
#else
  return false;
#endif
}

}  // namespace

bool backend_available(Backend b) { return b == Backend::Scalar || cpu_has_avx2(); }

Backend active_backend() { return current().load(); }

void set_backend(Backend b) {
  if (!backend_available(b))
    throw ConfigError("SIMD backend '" + std::string(backend_name(b)) + "' is not available on this CPU");
  current().store(b);
}

std::string_view backend_name(Backend b) {
  switch (b) {
    case Backend::Scalar: return "scalar";
    case Backend::Avx2: return "avx2";
  }
  return "unknown";
}

#if defined(CHAINNET_HAVE_AVX2)
#define CHAINNET_DISPATCH(fn, ...) \
  (use_avx2() ? avx2::fn(__VA_ARGS__) : scalar::fn(__VA_ARGS__))
#else
#define CHAINNET_DISPATCH(fn, ...) scalar::fn(__VA_ARGS__)
#endif

template <class T>
void gemm(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t a_rs,
          std::size_t a_cs, const T* b, std::size_t ldb, T* c, std::size_t ldc) {
  if (m == 0 || n == 0 || k == 0) return;
  CHAINNET_DISPATCH(gemm<T>, m, n, k, a, a_rs, a_cs, b, ldb, c, ldc);
}

template <class T>
void axpy(std::size_t n, T alpha, const T* x, T* y) {
  CHAINNET_DISPATCH(axpy<T>, n, alpha, x, y);
}

template <class T>
void relu(std::size_t n, const T* x, T* y) {
  CHAINNET_DISPATCH(relu<T>, n, x, y);
}

template <class T>
void relu_backward(std::size_t n, const T* x, const T* dy, T* dx) {
  CHAINNET_DISPATCH(relu_backward<T>, n, x, dy, dx);
}

template <class T>
void sgd_momentum(std::size_t n, T lr, T momentum, const T* g, T* v, T* w) {
  CHAINNET_DISPATCH(sgd_momentum<T>, n, lr, momentum, g, v, w);
}

#undef CHAINNET_DISPATCH

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

}  // namespace chainnet::simd
