#pragma once

#include <cmath>
#include <span>
#include <string_view>

#include "morphtag/gemm.hpp"
#include "morphtag/tensor.hpp"

namespace morphtag {

enum class Activation { kNone, kTanh, kRelu, kSigmoid };

Activation parse_activation(std::string_view name);
std::string_view activation_name(Activation act);

template <typename T>
inline T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

template <typename T>
inline T activate(Activation act, T x) {
  switch (act) {
    case Activation::kTanh:
      return std::tanh(x);
    case Activation::kRelu:
      return x > T(0) ? x : T(0);
    case Activation::kSigmoid:
      return sigmoid(x);
    case Activation::kNone:
      break;
  }
  return x;
}

// Derivative expressed through the activation output y.
template <typename T>
inline T activation_slope(Activation act, T y) {
  switch (act) {
    case Activation::kTanh:
      return T(1) - y * y;
    case Activation::kRelu:
      return y > T(0) ? T(1) : T(0);
    case Activation::kSigmoid:
      return y * (T(1) - y);
    case Activation::kNone:
      break;
  }
  return T(1);
}

template <typename T>
void activate_inplace(Activation act, MatView<T> m) {
  if (act == Activation::kNone) return;
  for (std::size_t r = 0; r < m.rows; ++r) {
    T* p = m.row(r);
    for (std::size_t c = 0; c < m.cols; ++c) p[c] = activate(act, p[c]);
  }
}

// dz = dy * f'(z), given y = f(z); written into dy in place.
template <typename T>
void backprop_activation_inplace(Activation act, CView<T> y, MatView<T> dy) {
  if (act == Activation::kNone) return;
  for (std::size_t r = 0; r < y.rows; ++r) {
    const T* yr = y.row(r);
    T* dr = dy.row(r);
    for (std::size_t c = 0; c < y.cols; ++c) dr[c] *= activation_slope(act, yr[c]);
  }
}

// Plain product of two rank-2 tensors.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2) throw DimensionError("matmul expects rank-2 operands");
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ: " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  Tensor<T> c({a.rows(), b.cols()});
  gemm_nn(view(a), view(b), view(c));
  return c;
}

// Accumulates da += dc * b^T and db += a^T * dc.
template <typename T>
void matmul_backward(const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>& dc, Tensor<T>& da,
                     Tensor<T>& db) {
  gemm_nt(view(dc), view(b), view(da));
  gemm_tn(view(a), view(dc), view(db));
}

template <typename T>
struct SoftmaxXent {
  T loss = T(0);
  Tensor<T> probs;
};

// Writes softmax(logits) into probs using max subtraction.
template <typename T>
void softmax(std::span<const T> logits, std::span<T> probs) {
  T mx = logits[0];
  for (const T v : logits) mx = v > mx ? v : mx;
  T sum = T(0);
  for (std::size_t k = 0; k < logits.size(); ++k) {
    probs[k] = std::exp(logits[k] - mx);
    sum += probs[k];
  }
  const T inv = T(1) / sum;
  for (auto& p : probs) p *= inv;
}

// Numerically stable -log softmax(logits)[gold] computed from log-sum-exp.
template <typename T>
T cross_entropy_from_logits(std::span<const T> logits, std::size_t gold) {
  T mx = logits[0];
  for (const T v : logits) mx = v > mx ? v : mx;
  T sum = T(0);
  for (const T v : logits) sum += std::exp(v - mx);
  return std::log(sum) + mx - logits[gold];
}

template <typename T>
SoftmaxXent<T> softmax_cross_entropy(const Tensor<T>& logits, std::size_t gold) {
  if (logits.size() == 0) throw DimensionError("softmax_cross_entropy: empty logits");
  if (gold >= logits.size()) {
    throw IndexError("softmax_cross_entropy: gold index " + std::to_string(gold) + " outside [0, " +
                     std::to_string(logits.size()) + ")");
  }
  SoftmaxXent<T> out;
  out.probs = Tensor<T>({logits.size()});
  softmax<T>(logits.values(), out.probs.values());
  out.loss = cross_entropy_from_logits<T>(logits.values(), gold);
  return out;
}

// dlogits = probs - onehot(gold)
template <typename T>
Tensor<T> softmax_cross_entropy_backward(const Tensor<T>& probs, std::size_t gold) {
  Tensor<T> d = probs;
  d[gold] -= T(1);
  return d;
}

}  // namespace morphtag
