#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "morphtag/ops.hpp"
#include "morphtag/param_store.hpp"
#include "morphtag/rng.hpp"
#include "morphtag/tensor.hpp"

namespace morphtag {

enum class Mode { kTrain, kEval };

// ---------------------------------------------------------------------------
// Single-instance forms of each building block.

template <typename T>
Tensor<T> embed(const Tensor<T>& table, std::size_t index);

// y = activation(W x + b), W is [dout x din].
template <typename T>
Tensor<T> affine(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, Activation act);

// Narrow convolution over a [T x din] sequence with filters [F x w x din].
// Sequences shorter than w are right-padded with pad_row (zeros if empty).
template <typename T>
Tensor<T> conv1d(const Tensor<T>& seq, const Tensor<T>& filters, const Tensor<T>& bias, Activation act,
                 std::span<const T> pad_row = {});

template <typename T>
struct PoolResult {
  Tensor<T> values;
  std::vector<std::size_t> argmax;  // first maximal time step per feature
};

template <typename T>
PoolResult<T> max_pool_over_time(const Tensor<T>& seq);

template <typename T>
struct LstmState {
  Tensor<T> h;
  Tensor<T> c;

  static LstmState zeros(std::size_t hidden) {
    return {Tensor<T>({hidden}), Tensor<T>({hidden})};
  }
};

// Gate blocks are stacked in the order input, forget, candidate, output.
template <typename T>
struct LstmWeights {
  const Tensor<T>& wx;  // [4H x din]
  const Tensor<T>& wh;  // [4H x H]
  const Tensor<T>& b;   // [4H]
};

template <typename T>
LstmState<T> lstm_step(const Tensor<T>& x, const LstmState<T>& state, const LstmWeights<T>& w);

template <typename T>
struct HighwayWeights {
  const Tensor<T>& w_transform;  // [d x d]
  const Tensor<T>& b_transform;
  const Tensor<T>& w_gate;       // [d x d]
  const Tensor<T>& b_gate;
};

// y = t * relu(W_H x + b_H) + (1 - t) * x with t = sigmoid(W_T x + b_T).
template <typename T>
Tensor<T> highway(const Tensor<T>& x, const HighwayWeights<T>& w);

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double keep_prob, Mode mode, Rng& rng);

// ---------------------------------------------------------------------------
// Batched layers with cached activations for the backward pass.

// Linear algebra for rows of x: out = x W^T + b.
template <typename T>
void linear_forward(CView<T> x, const Tensor<T>& w, const Tensor<T>& b, MatView<T> out);

// Given dz = dL/d(x W^T + b): dw += dz^T x, db += colsum(dz), dx (optional) += dz W.
template <typename T>
void linear_backward(CView<T> x, const Tensor<T>& w, CView<T> dz, Tensor<T>& dw,
                     Tensor<T>& db, MatView<T>* dx);

template <typename T>
class Embedding {
 public:
  Embedding() = default;
  Embedding(ParamStore<T>& store, const std::string& name, std::size_t vocab, std::size_t dim, Rng& rng,
            bool trainable = true);

  std::size_t vocab() const { return table_->value.rows(); }
  std::size_t dim() const { return table_->value.cols(); }
  Param<T>& table() { return *table_; }

  Tensor<T> lookup(std::span<const int> ids) const;
  // Adds d_out rows into the gradient of the referenced rows.
  void accumulate(std::span<const int> ids, ConstMatView<T> d_out);

  Tensor<T> forward(std::span<const int> ids);
  void backward(ConstMatView<T> d_out);

 private:
  Param<T>* table_ = nullptr;
  std::vector<int> ids_;
};

template <typename T>
class Affine {
 public:
  Affine() = default;
  Affine(ParamStore<T>& store, const std::string& name, std::size_t din, std::size_t dout, Activation act,
         Rng& rng);

  std::size_t input_dim() const { return w_->value.cols(); }
  std::size_t output_dim() const { return w_->value.rows(); }

  Tensor<T> forward(ConstMatView<T> x);
  Tensor<T> backward(ConstMatView<T> dy);

 private:
  Param<T>* w_ = nullptr;
  Param<T>* b_ = nullptr;
  Activation act_ = Activation::kNone;
  Tensor<T> x_;
  Tensor<T> y_;
};

// Inverted dropout; a no-op in eval mode or when keep_prob == 1.
template <typename T>
class Dropout {
 public:
  explicit Dropout(double keep_prob = 1.0);

  double keep_prob() const { return keep_prob_; }
  void forward_inplace(MatView<T> x, Mode mode, Rng& rng);
  void backward_inplace(MatView<T> dx) const;
  bool active() const { return !mask_.empty(); }

 private:
  double keep_prob_;
  Tensor<T> mask_;
};

// Sequences stored back to back: sequence i occupies rows
// [offsets[i], offsets[i+1]).
struct RaggedLayout {
  std::vector<std::size_t> offsets{0};

  static RaggedLayout from_lengths(std::span<const std::size_t> lengths);
  std::size_t count() const { return offsets.size() - 1; }
  std::size_t length(std::size_t i) const { return offsets[i + 1] - offsets[i]; }
  std::size_t total() const { return offsets.back(); }
};

template <typename T>
class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(ParamStore<T>& store, const std::string& name, std::size_t din, std::size_t width,
         std::size_t filters, Activation act, Rng& rng);

  std::size_t width() const { return width_; }
  std::size_t filters() const { return w_->value.dim(0); }

  // Sequences shorter than the filter width are zero-padded to the width.
  Tensor<T> forward(ConstMatView<T> x, const RaggedLayout& in, RaggedLayout* out);
  Tensor<T> backward(ConstMatView<T> dy);

 private:
  Param<T>* w_ = nullptr;  // [F x width x din]
  Param<T>* b_ = nullptr;
  std::size_t din_ = 0;
  std::size_t width_ = 0;
  Activation act_ = Activation::kRelu;
  RaggedLayout in_;
  std::vector<std::size_t> window_src_;  // first input row per window
  std::vector<std::size_t> window_len_;  // real (unpadded) rows per window
  Tensor<T> cols_;
  Tensor<T> y_;
};

template <typename T>
class MaxPoolOverTime {
 public:
  Tensor<T> forward(ConstMatView<T> x, const RaggedLayout& layout);
  Tensor<T> backward(ConstMatView<T> dy) const;

 private:
  std::size_t rows_ = 0;
  std::size_t features_ = 0;
  std::vector<std::size_t> argmax_;  // absolute input row per (sequence, feature)
};

// Time-major packing of variable-length sequences sorted by decreasing
// length (stable). At step t the active sequences are the first
// batch_sizes[t] sorted positions, stored in rows offsets[t] onward.
struct PackedLayout {
  std::vector<std::size_t> lengths;      // by original index
  std::vector<std::size_t> order;        // sorted position -> original index
  std::vector<std::size_t> rank;         // original index -> sorted position
  std::vector<std::size_t> batch_sizes;  // per step
  std::vector<std::size_t> offsets;      // per step
  std::size_t total = 0;

  static PackedLayout from_lengths(std::span<const std::size_t> lengths);

  std::size_t steps() const { return batch_sizes.size(); }
  std::size_t sequences() const { return lengths.size(); }
  std::size_t row(std::size_t seq, std::size_t t) const { return offsets[t] + rank[seq]; }
  // Packed row of the same sequence at the mirrored time step. Involution.
  std::vector<std::size_t> reversal() const;
};

enum class RecurrentDropout { kPerStep, kPerSequence };

template <typename T>
class Lstm {
 public:
  Lstm() = default;
  Lstm(ParamStore<T>& store, const std::string& name, std::size_t din, std::size_t hidden, Rng& rng,
       double recurrent_keep_prob = 1.0, RecurrentDropout dropout_kind = RecurrentDropout::kPerStep);

  std::size_t input_dim() const { return din_; }
  std::size_t hidden() const { return hidden_; }
  LstmWeights<T> weights() const { return {wx_->value, wh_->value, b_->value}; }

  // x is packed per layout; returns packed hidden outputs [total x H].
  Tensor<T> forward(ConstMatView<T> x, const PackedLayout& layout, Mode mode, Rng& rng);
  Tensor<T> backward(ConstMatView<T> dy);

 private:
  Param<T>* wx_ = nullptr;
  Param<T>* wh_ = nullptr;
  Param<T>* b_ = nullptr;
  std::size_t din_ = 0;
  std::size_t hidden_ = 0;
  double keep_prob_ = 1.0;
  RecurrentDropout dropout_kind_ = RecurrentDropout::kPerStep;

  PackedLayout layout_;
  Tensor<T> x_;
  Tensor<T> gates_;  // activated i, f, g, o
  Tensor<T> c_;
  Tensor<T> tanh_c_;
  Tensor<T> h_;
  Tensor<T> feed_;  // recurrent input actually used at each row
  Tensor<T> mask_;  // recurrent dropout mask, empty when inactive
};

// Forward and backward LSTMs; output rows are [forward | backward].
template <typename T>
class BiLstm {
 public:
  BiLstm() = default;
  BiLstm(ParamStore<T>& store, const std::string& name, std::size_t din, std::size_t hidden, Rng& rng,
         double recurrent_keep_prob = 1.0, RecurrentDropout dropout_kind = RecurrentDropout::kPerStep);

  std::size_t hidden() const { return fwd_.hidden(); }
  Lstm<T>& forward_lstm() { return fwd_; }
  Lstm<T>& backward_lstm() { return bwd_; }

  Tensor<T> forward(ConstMatView<T> x, const PackedLayout& layout, Mode mode, Rng& rng);
  Tensor<T> backward(ConstMatView<T> dy);

 private:
  Lstm<T> fwd_;
  Lstm<T> bwd_;
  std::vector<std::size_t> reversal_;
};

template <typename T>
class Highway {
 public:
  Highway() = default;
  Highway(ParamStore<T>& store, const std::string& name, std::size_t dim, Rng& rng);

  std::size_t dim() const { return dim_; }
  HighwayWeights<T> weights() const { return {wh_->value, bh_->value, wt_->value, bt_->value}; }

  Tensor<T> forward(ConstMatView<T> x);
  Tensor<T> backward(ConstMatView<T> dy);

 private:
  Param<T>* wh_ = nullptr;
  Param<T>* bh_ = nullptr;
  Param<T>* wt_ = nullptr;
  Param<T>* bt_ = nullptr;
  std::size_t dim_ = 0;
  Tensor<T> x_;
  Tensor<T> transform_;
  Tensor<T> gate_;
};

// Helpers for row gather/scatter used by the packing code.
template <typename T>
void gather_rows(CView<T> src, std::span<const std::size_t> rows, MatView<T> dst);

template <typename T>
void copy_block(CView<T> src, MatView<T> dst);

}  // namespace morphtag
