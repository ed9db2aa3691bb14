#pragma once

// Dense inner-loop kernels. Every kernel has an OpenMP-parallel version in
// flowcap::kernels and a plain serial version in flowcap::kernels::reference
// kept for testing and benchmarking. Parallelism is over output rows only and
// each output element is reduced in ascending index order, so both versions
// produce bitwise-identical results for any thread count.

#include <cstddef>
#include <cstdint>
#include <type_traits>

namespace flowcap::kernels {

// Reductions over float data accumulate in double; storage stays float.
template <class T>
using accum_t = std::conditional_t<std::is_same_v<T, float>, double, T>;

// Problems smaller than this many multiply-adds run serially.
inline constexpr std::size_t kParallelThreshold = 1u << 15;

// c[m×n] (+)= a[m×k] · b[k×n]
template <class T>
void matmul(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate);

// c[m×n] (+)= a[k×m]ᵀ · b[k×n]
template <class T>
void matmul_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate);

// c[m×n] (+)= a[m×k] · b[n×k]ᵀ
template <class T>
void matmul_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate);

// Row-wise softmax of x[m×n] into y. When `allowed` is non-null, entries with
// allowed[i*n+j] == 0 get exactly zero weight; a row with no allowed entry is
// all zeros.
template <class T>
void softmax_rows(const T* x, T* y, std::size_t m, std::size_t n, const std::uint8_t* allowed);

namespace reference {

template <class T>
void matmul(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate);
template <class T>
void matmul_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate);
template <class T>
void matmul_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate);
template <class T>
void softmax_rows(const T* x, T* y, std::size_t m, std::size_t n, const std::uint8_t* allowed);

}  // namespace reference

// Number of OpenMP threads the parallel kernels may use (1 without OpenMP).
int max_threads();

}  // namespace flowcap::kernels
