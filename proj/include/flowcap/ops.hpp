#pragma once

// Differentiable tensor ops. All of them are explicitly instantiated for
// float and double. Broadcasting is limited to identical shapes or a trailing
// vector b[n] against a matrix a[m×n]; anything else is a ShapeError.

#include <cstdint>
#include <span>
#include <vector>

#include "flowcap/tensor.hpp"

namespace flowcap {

template <class T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <class T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <class T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <class T>
BasicTensor<T> scale(const BasicTensor<T>& a, T s);

template <class T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <class T>
BasicTensor<T> transpose(const BasicTensor<T>& a);

// Exact (erf) GELU.
template <class T>
BasicTensor<T> gelu(const BasicTensor<T>& x);
template <class T>
BasicTensor<T> log(const BasicTensor<T>& x);

// Max-subtracted softmax along `axis`.
template <class T>
BasicTensor<T> softmax(const BasicTensor<T>& x, std::size_t axis);
// Softmax over the last axis of x[m×n] where allowed[i*n+j] selects the
// entries that may receive weight. Disallowed entries are exactly zero.
template <class T>
BasicTensor<T> masked_softmax(const BasicTensor<T>& x, std::vector<std::uint8_t> allowed);
template <class T>
BasicTensor<T> log_softmax(const BasicTensor<T>& x);

// Per-row statistics of x[m×n] (population variance).
template <class T>
BasicTensor<T> row_mean(const BasicTensor<T>& x);
template <class T>
BasicTensor<T> row_variance(const BasicTensor<T>& x);
template <class T>
BasicTensor<T> layer_norm(const BasicTensor<T>& x, const BasicTensor<T>& gain, const BasicTensor<T>& bias,
                          T eps = T(1e-5));

template <class T>
BasicTensor<T> reshape(const BasicTensor<T>& x, const Shape& shape);
template <class T>
BasicTensor<T> slice_rows(const BasicTensor<T>& x, std::size_t begin, std::size_t end);
template <class T>
BasicTensor<T> slice_cols(const BasicTensor<T>& x, std::size_t begin, std::size_t end);
// Row i of a matrix as a vector [n].
template <class T>
BasicTensor<T> row(const BasicTensor<T>& x, std::size_t i);
template <class T>
BasicTensor<T> concat_rows(std::span<const BasicTensor<T>> parts);
template <class T>
BasicTensor<T> concat_cols(std::span<const BasicTensor<T>> parts);
// Stacks K vectors [n] into a matrix [K×n].
template <class T>
BasicTensor<T> stack_rows(std::span<const BasicTensor<T>> rows);
// Tiles a vector [n] into [count×n].
template <class T>
BasicTensor<T> repeat_rows(const BasicTensor<T>& v, std::size_t count);
template <class T>
BasicTensor<T> gather_rows(const BasicTensor<T>& table, std::span<const int> ids);

// Elementwise max over the row axis of x[T×d]; ties route the subgradient to
// the first maximal row.
template <class T>
BasicTensor<T> max_pool_rows(const BasicTensor<T>& x);

template <class T>
BasicTensor<T> sum(const BasicTensor<T>& x);
// out[i] = x[i, idx[i]] for x[m×n].
template <class T>
BasicTensor<T> pick(const BasicTensor<T>& x, std::span<const int> idx);

// Convenience wrappers for initializer lists.
template <class T>
BasicTensor<T> concat_rows(std::initializer_list<BasicTensor<T>> parts) {
    return concat_rows<T>(std::span<const BasicTensor<T>>(parts.begin(), parts.size()));
}
template <class T>
BasicTensor<T> concat_cols(std::initializer_list<BasicTensor<T>> parts) {
    return concat_cols<T>(std::span<const BasicTensor<T>>(parts.begin(), parts.size()));
}

}  // namespace flowcap
