#pragma once

// Data-parallel inner loops of the network engine.
//
// Every kernel has a portable scalar reference in chainnet::simd::scalar and,
// on x86-64, an AVX2/FMA variant in chainnet::simd::avx2. The unqualified
// entry points dispatch at runtime to the active backend, which defaults to
// the fastest one the CPU supports and can be pinned with set_backend() or
// the CHAINNET_SIMD environment variable ("scalar" or "avx2").
//
// Results of the two backends agree to rounding; within one backend every
// kernel is deterministic (fixed reduction order).

#include <cstddef>
#include <string_view>

namespace chainnet::simd {

enum class Backend { Scalar, Avx2 };

bool backend_available(Backend b);
Backend active_backend();
// Throws ConfigError when the backend is not available on this CPU.
void set_backend(Backend b);
std::string_view backend_name(Backend b);

// C[m x n] += A' * B where A'(i, p) = a[i * a_rs + p * a_cs] (so both
// A * B and A^T * B are expressible) and B is row-major k x n with leading
// dimension ldb. C is row-major with leading dimension ldc.
template <class T>
void gemm(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t a_rs,
          std::size_t a_cs, const T* b, std::size_t ldb, T* c, std::size_t ldc);

// y += alpha * x
template <class T>
void axpy(std::size_t n, T alpha, const T* x, T* y);

// y = max(x, 0)
template <class T>
void relu(std::size_t n, const T* x, T* y);

// dx += (x >= 0) ? dy : 0
template <class T>
void relu_backward(std::size_t n, const T* x, const T* dy, T* dx);

// v = momentum * v - lr * g; w += v
template <class T>
void sgd_momentum(std::size_t n, T lr, T momentum, const T* g, T* v, T* w);

#define CHAINNET_SIMD_DECLARE_BACKEND(ns)                                                    \
  namespace ns {                                                                             \
  template <class T>                                                                         \
  void gemm(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t a_rs,      \
            std::size_t a_cs, const T* b, std::size_t ldb, T* c, std::size_t ldc);          \
  template <class T>                                                                         \
  void axpy(std::size_t n, T alpha, const T* x, T* y);                                       \
  template <class T>                                                                         \
  void relu(std::size_t n, const T* x, T* y);                                                \
  template <class T>                                                                         \
  void relu_backward(std::size_t n, const T* x, const T* dy, T* dx);                         \
  template <class T>                                                                         \
  void sgd_momentum(std::size_t n, T lr, T momentum, const T* g, T* v, T* w);                \
  }

CHAINNET_SIMD_DECLARE_BACKEND(scalar)
CHAINNET_SIMD_DECLARE_BACKEND(avx2)

#undef CHAINNET_SIMD_DECLARE_BACKEND

}  // namespace chainnet::simd
