#include "flowcap/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace flowcap::kernels {

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

namespace {

template <class T>
inline void softmax_row(const T* x, T* y, std::size_t n, const std::uint8_t* allowed) {
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
        if (allowed && !allowed[j]) continue;
        mx = std::max(mx, x[j]);
    }
    if (mx == -std::numeric_limits<T>::infinity()) {
        std::fill(y, y + n, T(0));
        return;
    }
    accum_t<T> sum = 0;
    for (std::size_t j = 0; j < n; ++j) {
        if (allowed && !allowed[j]) {
            y[j] = 0;
            continue;
        }
        y[j] = std::exp(x[j] - mx);
        sum += y[j];
    }
    const accum_t<T> inv = accum_t<T>(1) / sum;
    for (std::size_t j = 0; j < n; ++j) y[j] = static_cast<T>(y[j] * inv);
}

}  // namespace

template <class T>
void matmul(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    using A = accum_t<T>;
    const bool par = m > 1 && m * k * n >= kParallelThreshold;
#pragma omp parallel if (par)
    {
        std::vector<A> acc(n);
#pragma omp for schedule(static)
        for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(m); ++ii) {
            const auto i = static_cast<std::size_t>(ii);
            T* crow = c + i * n;
            for (std::size_t j = 0; j < n; ++j) acc[j] = accumulate ? A(crow[j]) : A(0);
            const T* arow = a + i * k;
            for (std::size_t p = 0; p < k; ++p) {
                const A av = arow[p];
                const T* brow = b + p * n;
                for (std::size_t j = 0; j < n; ++j) acc[j] += av * A(brow[j]);
            }
            for (std::size_t j = 0; j < n; ++j) crow[j] = static_cast<T>(acc[j]);
        }
    }
}

template <class T>
void matmul_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    using A = accum_t<T>;
    const bool par = m > 1 && m * k * n >= kParallelThreshold;
#pragma omp parallel if (par)
    {
        std::vector<A> acc(n);
#pragma omp for schedule(static)
        for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(m); ++ii) {
            const auto i = static_cast<std::size_t>(ii);
            T* crow = c + i * n;
            for (std::size_t j = 0; j < n; ++j) acc[j] = accumulate ? A(crow[j]) : A(0);
            for (std::size_t p = 0; p < k; ++p) {
                const A av = a[p * m + i];
                const T* brow = b + p * n;
                for (std::size_t j = 0; j < n; ++j) acc[j] += av * A(brow[j]);
            }
            for (std::size_t j = 0; j < n; ++j) crow[j] = static_cast<T>(acc[j]);
        }
    }
}

template <class T>
void matmul_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    using A = accum_t<T>;
    const bool par = m > 1 && m * k * n >= kParallelThreshold;
#pragma omp parallel for schedule(static) if (par)
    for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(m); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        const T* arow = a + i * k;
        T* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const T* brow = b + j * k;
            A s = accumulate ? A(crow[j]) : A(0);
            for (std::size_t p = 0; p < k; ++p) s += A(arow[p]) * A(brow[p]);
            crow[j] = static_cast<T>(s);
        }
    }
}

template <class T>
void softmax_rows(const T* x, T* y, std::size_t m, std::size_t n, const std::uint8_t* allowed) {
    const bool par = m > 1 && m * n >= kParallelThreshold;
#pragma omp parallel for schedule(static) if (par)
    for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(m); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        softmax_row(x + i * n, y + i * n, n, allowed ? allowed + i * n : nullptr);
    }
}

namespace reference {

template <class T>
void matmul(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    using A = accum_t<T>;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            A s = accumulate ? A(c[i * n + j]) : A(0);
            for (std::size_t p = 0; p < k; ++p) s += A(a[i * k + p]) * A(b[p * n + j]);
            c[i * n + j] = static_cast<T>(s);
        }
    }
}

template <class T>
void matmul_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    using A = accum_t<T>;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            A s = accumulate ? A(c[i * n + j]) : A(0);
            for (std::size_t p = 0; p < k; ++p) s += A(a[p * m + i]) * A(b[p * n + j]);
            c[i * n + j] = static_cast<T>(s);
        }
    }
}

template <class T>
void matmul_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    using A = accum_t<T>;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            A s = accumulate ? A(c[i * n + j]) : A(0);
            for (std::size_t p = 0; p < k; ++p) s += A(a[i * k + p]) * A(b[j * k + p]);
            c[i * n + j] = static_cast<T>(s);
        }
    }
}

template <class T>
void softmax_rows(const T* x, T* y, std::size_t m, std::size_t n, const std::uint8_t* allowed) {
    for (std::size_t i = 0; i < m; ++i) softmax_row(x + i * n, y + i * n, n, allowed ? allowed + i * n : nullptr);
}

}  // namespace reference

#define FLOWCAP_INSTANTIATE_KERNELS(NS, T)                                                               \
    template void NS::matmul<T>(const T*, const T*, T*, std::size_t, std::size_t, std::size_t, bool);    \
    template void NS::matmul_tn<T>(const T*, const T*, T*, std::size_t, std::size_t, std::size_t, bool); \
    template void NS::matmul_nt<T>(const T*, const T*, T*, std::size_t, std::size_t, std::size_t, bool); \
    template void NS::softmax_rows<T>(const T*, T*, std::size_t, std::size_t, const std::uint8_t*);

}  // namespace flowcap::kernels

FLOWCAP_INSTANTIATE_KERNELS(flowcap::kernels, float)
FLOWCAP_INSTANTIATE_KERNELS(flowcap::kernels, double)
FLOWCAP_INSTANTIATE_KERNELS(flowcap::kernels::reference, float)
FLOWCAP_INSTANTIATE_KERNELS(flowcap::kernels::reference, double)
