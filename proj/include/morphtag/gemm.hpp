#pragma once

#include "morphtag/tensor.hpp"

namespace morphtag {

// Accumulating matrix products. For every output element the summation
// runs over k in ascending order in fixed-size blocks, independent of how
// many rows or columns the call covers, so a row computed inside a batch
// is bit-identical to the same row computed alone.

// c += a * b
template <typename T>
void gemm_nn(CView<T> a, CView<T> b, MatView<T> c);

// c += a^T * b
template <typename T>
void gemm_tn(CView<T> a, CView<T> b, MatView<T> c);

// c += a * b^T
template <typename T>
void gemm_nt(CView<T> a, CView<T> b, MatView<T> c);

template <typename T>
Tensor<T> transpose(ConstMatView<T> a);

template <typename T>
Tensor<T> transpose(MatView<T> a) {
  return transpose(ConstMatView<T>(a));
}

// Column sums of a accumulated into out (length a.cols).
template <typename T>
void add_column_sums(CView<T> a, T* out);

// Adds bias to every row of c.
template <typename T>
void add_row_bias(MatView<T> c, const T* bias);

}  // namespace morphtag
