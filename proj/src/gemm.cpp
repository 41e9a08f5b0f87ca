#include "morphtag/gemm.hpp"

#include <string>

namespace morphtag {

namespace {

constexpr std::size_t kBlockK = 256;
constexpr int kTileRows = 8;
constexpr int kTileCols = 32;

void check_product(std::size_t m, std::size_t k, std::size_t k2, std::size_t n, std::size_t cm,
                   std::size_t cn, const char* what) {
  if (k != k2 || m != cm || n != cn) {
    throw DimensionError(std::string(what) + ": incompatible shapes [" + std::to_string(m) + "x" +
                         std::to_string(k) + "] * [" + std::to_string(k2) + "x" + std::to_string(n) +
                         "] -> [" + std::to_string(cm) + "x" + std::to_string(cn) + "]");
  }
}

// a(r, p) = TransA ? a[p * lda + r] : a[r * lda + p]
template <typename T, int R, int NC, bool TransA>
inline void tile(const T* a, std::size_t lda, const T* b, std::size_t ldb, T* c, std::size_t ldc,
                 std::size_t kc) {
  T acc[R][NC];
  for (int r = 0; r < R; ++r)
    for (int j = 0; j < NC; ++j) acc[r][j] = T(0);
  for (std::size_t p = 0; p < kc; ++p) {
    const T* brow = b + p * ldb;
    for (int r = 0; r < R; ++r) {
      const T av = TransA ? a[p * lda + r] : a[r * lda + p];
      for (int j = 0; j < NC; ++j) acc[r][j] += av * brow[j];
    }
  }
  for (int r = 0; r < R; ++r)
    for (int j = 0; j < NC; ++j) c[r * ldc + j] += acc[r][j];
}

// Same arithmetic sequence as tile() for ragged edges.
template <typename T, bool TransA>
inline void tile_edge(const T* a, std::size_t lda, const T* b, std::size_t ldb, T* c, std::size_t ldc,
                      std::size_t kc, std::size_t nr, std::size_t nc) {
  for (std::size_t r = 0; r < nr; ++r) {
    for (std::size_t j = 0; j < nc; ++j) {
      T acc = T(0);
      for (std::size_t p = 0; p < kc; ++p) {
        const T av = TransA ? a[p * lda + r] : a[r * lda + p];
        acc += av * b[p * ldb + j];
      }
      c[r * ldc + j] += acc;
    }
  }
}

template <typename T, bool TransA>
void product(const T* a, std::size_t lda, const T* b, std::size_t ldb, T* c, std::size_t ldc,
             std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t k0 = 0; k0 < k; k0 += kBlockK) {
    const std::size_t kc = std::min(kBlockK, k - k0);
    const T* bk = b + k0 * ldb;
    for (std::size_t j0 = 0; j0 < n; j0 += kTileCols) {
      const std::size_t nc = std::min<std::size_t>(kTileCols, n - j0);
      std::size_t i0 = 0;
      auto a_at = [&](std::size_t i) { return TransA ? a + k0 * lda + i : a + i * lda + k0; };
      if (nc == kTileCols) {
        for (; i0 + kTileRows <= m; i0 += kTileRows) {
          tile<T, kTileRows, kTileCols, TransA>(a_at(i0), lda, bk + j0, ldb, c + i0 * ldc + j0, ldc, kc);
        }
        for (; i0 < m; ++i0) {
          tile<T, 1, kTileCols, TransA>(a_at(i0), lda, bk + j0, ldb, c + i0 * ldc + j0, ldc, kc);
        }
      } else {
        tile_edge<T, TransA>(a_at(0), lda, bk + j0, ldb, c + j0, ldc, kc, m, nc);
      }
    }
  }
}

}  // namespace

template <typename T>
void gemm_nn(CView<T> a, CView<T> b, MatView<T> c) {
  check_product(a.rows, a.cols, b.rows, b.cols, c.rows, c.cols, "gemm_nn");
  if (a.rows == 0 || b.cols == 0 || a.cols == 0) return;
  product<T, false>(a.ptr, a.ld, b.ptr, b.ld, c.ptr, c.ld, a.rows, a.cols, b.cols);
}

template <typename T>
void gemm_tn(CView<T> a, CView<T> b, MatView<T> c) {
  check_product(a.cols, a.rows, b.rows, b.cols, c.rows, c.cols, "gemm_tn");
  if (a.cols == 0 || b.cols == 0 || a.rows == 0) return;
  product<T, true>(a.ptr, a.ld, b.ptr, b.ld, c.ptr, c.ld, a.cols, a.rows, b.cols);
}

template <typename T>
void gemm_nt(CView<T> a, CView<T> b, MatView<T> c) {
  check_product(a.rows, a.cols, b.cols, b.rows, c.rows, c.cols, "gemm_nt");
  if (a.rows == 0 || b.rows == 0 || a.cols == 0) return;
  const Tensor<T> bt = transpose(b);
  product<T, false>(a.ptr, a.ld, bt.data(), bt.cols(), c.ptr, c.ld, a.rows, a.cols, b.rows);
}

template <typename T>
Tensor<T> transpose(ConstMatView<T> a) {
  Tensor<T> out({a.cols, a.rows});
  T* o = out.data();
  for (std::size_t r = 0; r < a.rows; ++r) {
    const T* src = a.row(r);
    for (std::size_t c = 0; c < a.cols; ++c) o[c * a.rows + r] = src[c];
  }
  return out;
}

template <typename T>
void add_column_sums(CView<T> a, T* out) {
  for (std::size_t r = 0; r < a.rows; ++r) {
    const T* src = a.row(r);
    for (std::size_t c = 0; c < a.cols; ++c) out[c] += src[c];
  }
}

template <typename T>
void add_row_bias(MatView<T> c, const T* bias) {
  for (std::size_t r = 0; r < c.rows; ++r) {
    T* dst = c.row(r);
    for (std::size_t j = 0; j < c.cols; ++j) dst[j] += bias[j];
  }
}

#define MORPHTAG_INSTANTIATE(T)                                        \
  template void gemm_nn<T>(ConstMatView<T>, ConstMatView<T>, MatView<T>); \
  template void gemm_tn<T>(ConstMatView<T>, ConstMatView<T>, MatView<T>); \
  template void gemm_nt<T>(ConstMatView<T>, ConstMatView<T>, MatView<T>); \
  template Tensor<T> transpose<T>(ConstMatView<T>);                    \
  template void add_column_sums<T>(ConstMatView<T>, T*);               \
  template void add_row_bias<T>(MatView<T>, const T*);

MORPHTAG_INSTANTIATE(float)
MORPHTAG_INSTANTIATE(double)

#undef MORPHTAG_INSTANTIATE

}  // namespace morphtag
