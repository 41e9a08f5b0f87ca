#include "morphtag/layers.hpp"

#include <algorithm>
#include <numeric>

namespace morphtag {

namespace {

template <typename T>
void require_shape(const Tensor<T>& t, const Shape& shape, const char* what) {
  if (t.shape() != shape) {
    throw DimensionError(std::string(what) + ": expected " + shape_string(shape) + ", got " +
                         shape_string(t.shape()));
  }
}

template <typename T>
Tensor<T> row_tensor(const Tensor<T>& v) {
  Tensor<T> r = v;
  r.reshape({1, v.size()});
  return r;
}

}  // namespace

// ---------------------------------------------------------------------------
// Single-instance ops.

template <typename T>
Tensor<T> embed(const Tensor<T>& table, std::size_t index) {
  if (table.rank() != 2) throw DimensionError("embed: table must be rank 2");
  if (index >= table.rows()) {
    throw IndexError("embed: index " + std::to_string(index) + " outside vocabulary of " +
                     std::to_string(table.rows()));
  }
  const auto row = table.row(index);
  return Tensor<T>({table.cols()}, std::vector<T>(row.begin(), row.end()));
}

template <typename T>
Tensor<T> affine(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, Activation act) {
  if (w.rank() != 2 || x.size() != w.cols() || b.size() != w.rows()) {
    throw DimensionError("affine: x " + shape_string(x.shape()) + ", W " + shape_string(w.shape()) +
                         ", b " + shape_string(b.shape()));
  }
  Tensor<T> y({1, w.rows()});
  const Tensor<T> xr = row_tensor(x);
  linear_forward(view(xr), w, b, view(y));
  activate_inplace(act, view(y));
  y.reshape({w.rows()});
  return y;
}

template <typename T>
Tensor<T> conv1d(const Tensor<T>& seq, const Tensor<T>& filters, const Tensor<T>& bias, Activation act,
                 std::span<const T> pad_row) {
  if (seq.rank() != 2 || filters.rank() != 3) throw DimensionError("conv1d: expects [T x din] and [F x w x din]");
  const std::size_t len = seq.rows(), din = seq.cols();
  const std::size_t nf = filters.dim(0), width = filters.dim(1);
  if (filters.dim(2) != din || bias.size() != nf) {
    throw DimensionError("conv1d: filters " + shape_string(filters.shape()) + " do not match input " +
                         shape_string(seq.shape()));
  }
  if (len == 0) throw DimensionError("conv1d: empty sequence");
  if (!pad_row.empty() && pad_row.size() != din) throw DimensionError("conv1d: pad row width mismatch");
  const std::size_t padded = std::max(len, width);
  const std::size_t windows = padded - width + 1;
  Tensor<T> cols({windows, width * din});
  for (std::size_t t = 0; t < windows; ++t) {
    for (std::size_t k = 0; k < width; ++k) {
      T* dst = cols.data() + t * width * din + k * din;
      if (t + k < len) {
        std::copy_n(seq.data() + (t + k) * din, din, dst);
      } else if (!pad_row.empty()) {
        std::copy(pad_row.begin(), pad_row.end(), dst);
      }
    }
  }
  Tensor<T> flat = filters;
  flat.reshape({nf, width * din});
  Tensor<T> y({windows, nf});
  linear_forward(view(cols), flat, bias, view(y));
  activate_inplace(act, view(y));
  return y;
}

template <typename T>
PoolResult<T> max_pool_over_time(const Tensor<T>& seq) {
  if (seq.rows() == 0) throw DimensionError("max_pool_over_time: empty sequence");
  PoolResult<T> out;
  const std::size_t nf = seq.cols();
  out.values = Tensor<T>({nf});
  out.argmax.assign(nf, 0);
  for (std::size_t f = 0; f < nf; ++f) {
    T best = seq.at(0, f);
    for (std::size_t t = 1; t < seq.rows(); ++t) {
      if (seq.at(t, f) > best) {
        best = seq.at(t, f);
        out.argmax[f] = t;
      }
    }
    out.values[f] = best;
  }
  return out;
}

namespace {

// Gate nonlinearities and cell update for n rows of pre-activations.
template <typename T>
void lstm_cell(MatView<T> gates, const T* c_prev, std::size_t c_prev_ld, std::size_t hidden, T* c, T* tanh_c,
               T* h, std::size_t ld) {
  for (std::size_t r = 0; r < gates.rows; ++r) {
    T* g = gates.row(r);
    const T* cp = c_prev ? c_prev + r * c_prev_ld : nullptr;
    T* cr = c + r * ld;
    T* tr = tanh_c + r * ld;
    T* hr = h + r * ld;
    for (std::size_t j = 0; j < hidden; ++j) {
      const T ig = sigmoid(g[j]);
      const T fg = sigmoid(g[hidden + j]);
      const T cand = std::tanh(g[2 * hidden + j]);
      const T og = sigmoid(g[3 * hidden + j]);
      g[j] = ig;
      g[hidden + j] = fg;
      g[2 * hidden + j] = cand;
      g[3 * hidden + j] = og;
      const T cell = (cp ? fg * cp[j] : T(0)) + ig * cand;
      cr[j] = cell;
      tr[j] = std::tanh(cell);
      hr[j] = og * tr[j];
    }
  }
}

}  // namespace

template <typename T>
LstmState<T> lstm_step(const Tensor<T>& x, const LstmState<T>& state, const LstmWeights<T>& w) {
  const std::size_t hidden = state.h.size();
  if (state.c.size() != hidden) throw DimensionError("lstm_step: h and c differ in length");
  if (w.wx.rank() != 2 || w.wx.rows() != 4 * hidden || w.wx.cols() != x.size() || w.wh.rows() != 4 * hidden ||
      w.wh.cols() != hidden || w.b.size() != 4 * hidden) {
    throw DimensionError("lstm_step: weights do not match input " + std::to_string(x.size()) + " / hidden " +
                         std::to_string(hidden));
  }
  Tensor<T> gates({1, 4 * hidden});
  const Tensor<T> wx_t = transpose(view(w.wx));
  const Tensor<T> wh_t = transpose(view(w.wh));
  gemm_nn(ConstMatView<T>(x.data(), 1, x.size(), x.size()), view(wx_t), view(gates));
  gemm_nn(ConstMatView<T>(state.h.data(), 1, hidden, hidden), view(wh_t), view(gates));
  add_row_bias(view(gates), w.b.data());
  LstmState<T> next = LstmState<T>::zeros(hidden);
  Tensor<T> tanh_c({hidden});
  lstm_cell(view(gates), state.c.data(), hidden, hidden, next.c.data(), tanh_c.data(), next.h.data(), hidden);
  return next;
}

template <typename T>
Tensor<T> highway(const Tensor<T>& x, const HighwayWeights<T>& w) {
  const std::size_t d = x.size();
  require_shape(w.w_transform, {d, d}, "highway transform");
  require_shape(w.w_gate, {d, d}, "highway gate");
  Tensor<T> h = affine(x, w.w_transform, w.b_transform, Activation::kRelu);
  Tensor<T> t = affine(x, w.w_gate, w.b_gate, Activation::kSigmoid);
  Tensor<T> y({d});
  for (std::size_t i = 0; i < d; ++i) y[i] = t[i] * h[i] + (T(1) - t[i]) * x[i];
  return y;
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double keep_prob, Mode mode, Rng& rng) {
  Dropout<T> d(keep_prob);
  Tensor<T> y = x;
  MatView<T> v{y.data(), 1, y.size(), y.size()};
  d.forward_inplace(v, mode, rng);
  return y;
}

// ---------------------------------------------------------------------------
// Linear algebra shared by the batched layers.

template <typename T>
void linear_forward(CView<T> x, const Tensor<T>& w, const Tensor<T>& b, MatView<T> out) {
  if (x.cols != w.cols() || out.cols != w.rows() || out.rows != x.rows || b.size() != w.rows()) {
    throw DimensionError("linear: input width " + std::to_string(x.cols) + " vs weight " +
                         shape_string(w.shape()));
  }
  const Tensor<T> wt = transpose(view(w));
  gemm_nn(x, view(wt), out);
  add_row_bias(out, b.data());
}

template <typename T>
void linear_backward(CView<T> x, const Tensor<T>& w, CView<T> dz, Tensor<T>& dw, Tensor<T>& db,
                     MatView<T>* dx) {
  gemm_tn(dz, x, view(dw));
  add_column_sums(dz, db.data());
  if (dx) gemm_nn(dz, view(w), *dx);
}

template <typename T>
void gather_rows(CView<T> src, std::span<const std::size_t> rows, MatView<T> dst) {
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy_n(src.row(rows[i]), src.cols, dst.row(i));
}

template <typename T>
void copy_block(CView<T> src, MatView<T> dst) {
  for (std::size_t r = 0; r < src.rows; ++r) std::copy_n(src.row(r), src.cols, dst.row(r));
}

// ---------------------------------------------------------------------------
// Embedding

template <typename T>
Embedding<T>::Embedding(ParamStore<T>& store, const std::string& name, std::size_t vocab, std::size_t dim,
                        Rng& rng, bool trainable)
    : table_(&store.add(name, {vocab, dim}, trainable)) {
  glorot_uniform(table_->value, 1, dim, rng);
}

template <typename T>
Tensor<T> Embedding<T>::lookup(std::span<const int> ids) const {
  const std::size_t d = dim();
  Tensor<T> out({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const int id = ids[i];
    if (id < 0 || static_cast<std::size_t>(id) >= vocab()) {
      throw IndexError(table_->name + ": id " + std::to_string(id) + " outside vocabulary of " +
                       std::to_string(vocab()));
    }
    std::copy_n(table_->value.data() + static_cast<std::size_t>(id) * d, d, out.data() + i * d);
  }
  return out;
}

template <typename T>
void Embedding<T>::accumulate(std::span<const int> ids, ConstMatView<T> d_out) {
  if (!table_->trainable) return;
  const std::size_t d = dim();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    T* g = table_->grad.data() + static_cast<std::size_t>(ids[i]) * d;
    const T* src = d_out.row(i);
    for (std::size_t j = 0; j < d; ++j) g[j] += src[j];
  }
}

template <typename T>
Tensor<T> Embedding<T>::forward(std::span<const int> ids) {
  ids_.assign(ids.begin(), ids.end());
  return lookup(ids);
}

template <typename T>
void Embedding<T>::backward(ConstMatView<T> d_out) {
  accumulate(ids_, d_out);
}

// ---------------------------------------------------------------------------
// Affine

template <typename T>
Affine<T>::Affine(ParamStore<T>& store, const std::string& name, std::size_t din, std::size_t dout,
                  Activation act, Rng& rng)
    : w_(&store.add(name + ".w", {dout, din})), b_(&store.add(name + ".b", {dout})), act_(act) {
  glorot_uniform(w_->value, din, dout, rng);
}

template <typename T>
Tensor<T> Affine<T>::forward(ConstMatView<T> x) {
  x_.reset({x.rows, x.cols});
  copy_block(x, view(x_));
  y_.reset({x.rows, output_dim()});
  linear_forward(view(std::as_const(x_)), w_->value, b_->value, view(y_));
  activate_inplace(act_, view(y_));
  return y_;
}

template <typename T>
Tensor<T> Affine<T>::backward(ConstMatView<T> dy) {
  Tensor<T> dz({dy.rows, dy.cols});
  copy_block(dy, view(dz));
  backprop_activation_inplace(act_, view(std::as_const(y_)), view(dz));
  Tensor<T> dx({x_.rows(), input_dim()});
  MatView<T> dxv = view(dx);
  linear_backward(view(std::as_const(x_)), w_->value, view(std::as_const(dz)), w_->grad, b_->grad, &dxv);
  return dx;
}

// ---------------------------------------------------------------------------
// Dropout

template <typename T>
Dropout<T>::Dropout(double keep_prob) : keep_prob_(keep_prob) {
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) {
    throw ConfigError("dropout keep probability must lie in (0, 1], got " + std::to_string(keep_prob));
  }
}

template <typename T>
void Dropout<T>::forward_inplace(MatView<T> x, Mode mode, Rng& rng) {
  if (mode == Mode::kEval || keep_prob_ >= 1.0) {
    mask_ = Tensor<T>();
    return;
  }
  mask_.reset({x.rows, x.cols});
  const T scale = static_cast<T>(1.0 / keep_prob_);
  for (std::size_t r = 0; r < x.rows; ++r) {
    T* row = x.row(r);
    T* m = mask_.data() + r * x.cols;
    for (std::size_t c = 0; c < x.cols; ++c) {
      m[c] = rng.bernoulli(keep_prob_) ? scale : T(0);
      row[c] *= m[c];
    }
  }
}

template <typename T>
void Dropout<T>::backward_inplace(MatView<T> dx) const {
  if (mask_.empty()) return;
  for (std::size_t r = 0; r < dx.rows; ++r) {
    T* row = dx.row(r);
    const T* m = mask_.data() + r * dx.cols;
    for (std::size_t c = 0; c < dx.cols; ++c) row[c] *= m[c];
  }
}

// ---------------------------------------------------------------------------
// Ragged sequences, convolution and pooling

RaggedLayout RaggedLayout::from_lengths(std::span<const std::size_t> lengths) {
  RaggedLayout l;
  l.offsets.reserve(lengths.size() + 1);
  for (const std::size_t n : lengths) l.offsets.push_back(l.offsets.back() + n);
  return l;
}

template <typename T>
Conv1d<T>::Conv1d(ParamStore<T>& store, const std::string& name, std::size_t din, std::size_t width,
                  std::size_t filters, Activation act, Rng& rng)
    : w_(&store.add(name + ".w", {filters, width, din})),
      b_(&store.add(name + ".b", {filters})),
      din_(din),
      width_(width),
      act_(act) {
  if (width == 0 || filters == 0) throw ConfigError(name + ": filter width and count must be positive");
  glorot_uniform(w_->value, width * din, filters, rng);
}

template <typename T>
Tensor<T> Conv1d<T>::forward(ConstMatView<T> x, const RaggedLayout& in, RaggedLayout* out) {
  if (x.cols != din_ || x.rows != in.total()) throw DimensionError(w_->name + ": input does not match layout");
  in_ = in;
  std::vector<std::size_t> windows(in.count());
  for (std::size_t s = 0; s < in.count(); ++s) {
    if (in.length(s) == 0) throw DimensionError(w_->name + ": empty sequence");
    windows[s] = std::max(in.length(s), width_) - width_ + 1;
  }
  *out = RaggedLayout::from_lengths(windows);
  const std::size_t total = out->total();
  const std::size_t span = width_ * din_;
  cols_.reset({total, span});
  window_src_.resize(total);
  window_len_.resize(total);
  for (std::size_t s = 0; s < in.count(); ++s) {
    for (std::size_t t = 0; t < windows[s]; ++t) {
      const std::size_t wrow = out->offsets[s] + t;
      const std::size_t real = std::min(width_, in.length(s) - t);
      window_src_[wrow] = in.offsets[s] + t;
      window_len_[wrow] = real;
      for (std::size_t k = 0; k < real; ++k) {
        std::copy_n(x.row(in.offsets[s] + t + k), din_, cols_.data() + wrow * span + k * din_);
      }
    }
  }
  y_.reset({total, filters()});
  linear_forward(view(std::as_const(cols_)), w_->value, b_->value, view(y_));
  activate_inplace(act_, view(y_));
  return y_;
}

template <typename T>
Tensor<T> Conv1d<T>::backward(ConstMatView<T> dy) {
  const std::size_t span = width_ * din_;
  Tensor<T> dz({dy.rows, dy.cols});
  copy_block(dy, view(dz));
  backprop_activation_inplace(act_, view(std::as_const(y_)), view(dz));
  Tensor<T> dcols({dy.rows, span});
  MatView<T> dcv = view(dcols);
  linear_backward(view(std::as_const(cols_)), w_->value, view(std::as_const(dz)), w_->grad, b_->grad, &dcv);
  Tensor<T> dx({in_.total(), din_});
  for (std::size_t wrow = 0; wrow < dy.rows; ++wrow) {
    for (std::size_t k = 0; k < window_len_[wrow]; ++k) {
      T* dst = dx.data() + (window_src_[wrow] + k) * din_;
      const T* src = dcols.data() + wrow * span + k * din_;
      for (std::size_t j = 0; j < din_; ++j) dst[j] += src[j];
    }
  }
  return dx;
}

template <typename T>
Tensor<T> MaxPoolOverTime<T>::forward(ConstMatView<T> x, const RaggedLayout& layout) {
  rows_ = x.rows;
  features_ = x.cols;
  const std::size_t n = layout.count();
  Tensor<T> out({n, features_});
  argmax_.assign(n * features_, 0);
  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t begin = layout.offsets[s], end = layout.offsets[s + 1];
    if (begin == end) throw DimensionError("max_pool_over_time: empty sequence");
    T* o = out.data() + s * features_;
    std::size_t* am = argmax_.data() + s * features_;
    std::copy_n(x.row(begin), features_, o);
    std::fill_n(am, features_, begin);
    for (std::size_t t = begin + 1; t < end; ++t) {
      const T* xr = x.row(t);
      for (std::size_t f = 0; f < features_; ++f) {
        if (xr[f] > o[f]) {
          o[f] = xr[f];
          am[f] = t;
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> MaxPoolOverTime<T>::backward(ConstMatView<T> dy) const {
  Tensor<T> dx({rows_, features_});
  for (std::size_t s = 0; s < dy.rows; ++s) {
    const T* d = dy.row(s);
    for (std::size_t f = 0; f < features_; ++f) dx.data()[argmax_[s * features_ + f] * features_ + f] += d[f];
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Packed recurrent layers

PackedLayout PackedLayout::from_lengths(std::span<const std::size_t> lengths) {
  PackedLayout p;
  p.lengths.assign(lengths.begin(), lengths.end());
  const std::size_t n = lengths.size();
  p.order.resize(n);
  std::iota(p.order.begin(), p.order.end(), std::size_t{0});
  std::stable_sort(p.order.begin(), p.order.end(),
                   [&](std::size_t a, std::size_t b) { return lengths[a] > lengths[b]; });
  p.rank.resize(n);
  for (std::size_t s = 0; s < n; ++s) {
    if (lengths[p.order[s]] == 0) throw DataError("packed sequence of length zero");
    p.rank[p.order[s]] = s;
  }
  const std::size_t steps = n ? lengths[p.order[0]] : 0;
  p.batch_sizes.assign(steps, 0);
  p.offsets.assign(steps, 0);
  for (std::size_t t = 0; t < steps; ++t) {
    std::size_t active = 0;
    while (active < n && lengths[p.order[active]] > t) ++active;
    p.batch_sizes[t] = active;
    p.offsets[t] = p.total;
    p.total += active;
  }
  return p;
}

std::vector<std::size_t> PackedLayout::reversal() const {
  std::vector<std::size_t> rev(total);
  for (std::size_t t = 0; t < steps(); ++t) {
    for (std::size_t s = 0; s < batch_sizes[t]; ++s) {
      const std::size_t len = lengths[order[s]];
      rev[offsets[t] + s] = offsets[len - 1 - t] + s;
    }
  }
  return rev;
}

template <typename T>
Lstm<T>::Lstm(ParamStore<T>& store, const std::string& name, std::size_t din, std::size_t hidden, Rng& rng,
              double recurrent_keep_prob, RecurrentDropout dropout_kind)
    : wx_(&store.add(name + ".wx", {4 * hidden, din})),
      wh_(&store.add(name + ".wh", {4 * hidden, hidden})),
      b_(&store.add(name + ".b", {4 * hidden})),
      din_(din),
      hidden_(hidden),
      keep_prob_(recurrent_keep_prob),
      dropout_kind_(dropout_kind) {
  if (!(recurrent_keep_prob > 0.0 && recurrent_keep_prob <= 1.0)) {
    throw ConfigError(name + ": recurrent keep probability must lie in (0, 1]");
  }
  glorot_uniform(wx_->value, din, hidden, rng);
  glorot_uniform(wh_->value, hidden, hidden, rng);
  for (std::size_t j = 0; j < hidden; ++j) b_->value[hidden + j] = T(1);
}

template <typename T>
Tensor<T> Lstm<T>::forward(ConstMatView<T> x, const PackedLayout& layout, Mode mode, Rng& rng) {
  const std::size_t total = layout.total, H = hidden_, G = 4 * H;
  if (x.rows != total || x.cols != din_) {
    throw DimensionError(wx_->name + ": packed input [" + std::to_string(x.rows) + "x" + std::to_string(x.cols) +
                         "] does not match layout / input width " + std::to_string(din_));
  }
  layout_ = layout;
  x_.reset({total, din_});
  copy_block(x, view(x_));
  const Tensor<T> wx_t = transpose(view(wx_->value));
  const Tensor<T> wh_t = transpose(view(wh_->value));
  gates_.reset({total, G});
  gemm_nn(view(std::as_const(x_)), view(wx_t), view(gates_));
  c_.reset({total, H});
  tanh_c_.reset({total, H});
  h_.reset({total, H});
  feed_.reset({total, H});

  const bool drop = mode == Mode::kTrain && keep_prob_ < 1.0;
  mask_ = Tensor<T>();
  if (drop) {
    const T scale = static_cast<T>(1.0 / keep_prob_);
    mask_.reset({total, H});
    if (dropout_kind_ == RecurrentDropout::kPerStep) {
      for (T& m : mask_.values()) m = rng.bernoulli(keep_prob_) ? scale : T(0);
    } else {
      Tensor<T> per_seq({layout.sequences(), H});
      for (T& m : per_seq.values()) m = rng.bernoulli(keep_prob_) ? scale : T(0);
      for (std::size_t t = 0; t < layout.steps(); ++t) {
        for (std::size_t s = 0; s < layout.batch_sizes[t]; ++s) {
          std::copy_n(per_seq.data() + s * H, H, mask_.data() + (layout.offsets[t] + s) * H);
        }
      }
    }
  }

  for (std::size_t t = 0; t < layout.steps(); ++t) {
    const std::size_t n = layout.batch_sizes[t], r0 = layout.offsets[t];
    MatView<T> g = view(gates_).row_range(r0, n);
    const T* c_prev = nullptr;
    if (t > 0) {
      const std::size_t p0 = layout.offsets[t - 1];
      T* feed = feed_.data() + r0 * H;
      std::copy_n(h_.data() + p0 * H, n * H, feed);
      if (drop) {
        const T* m = mask_.data() + r0 * H;
        for (std::size_t i = 0; i < n * H; ++i) feed[i] *= m[i];
      }
      gemm_nn(ConstMatView<T>(feed, n, H, H), view(wh_t), g);
      c_prev = c_.data() + p0 * H;
    }
    add_row_bias(g, b_->value.data());
    lstm_cell(g, c_prev, H, H, c_.data() + r0 * H, tanh_c_.data() + r0 * H, h_.data() + r0 * H, H);
  }
  return h_;
}

template <typename T>
Tensor<T> Lstm<T>::backward(ConstMatView<T> dy) {
  const PackedLayout& layout = layout_;
  const std::size_t total = layout.total, H = hidden_, G = 4 * H;
  if (dy.rows != total || dy.cols != H) throw DimensionError(wx_->name + ": gradient shape mismatch");
  Tensor<T> dgates({total, G});
  const std::size_t max_rows = layout.steps() ? layout.batch_sizes[0] : 0;
  Tensor<T> dh_carry({max_rows, H}), dc_carry({max_rows, H});
  Tensor<T> dh_next({max_rows, H}), dc_next({max_rows, H});
  const bool drop = !mask_.empty();

  for (std::size_t t = layout.steps(); t-- > 0;) {
    const std::size_t n = layout.batch_sizes[t], r0 = layout.offsets[t];
    const std::size_t n_carry = t + 1 < layout.steps() ? layout.batch_sizes[t + 1] : 0;
    const T* c_prev = t > 0 ? c_.data() + layout.offsets[t - 1] * H : nullptr;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t r = r0 + i;
      const T* gr = gates_.data() + r * G;
      const T* tc = tanh_c_.data() + r * H;
      const T* dyr = dy.row(r);
      T* dg = dgates.data() + r * G;
      T* dc_out = dc_next.data() + i * H;
      for (std::size_t j = 0; j < H; ++j) {
        const T ig = gr[j], fg = gr[H + j], cand = gr[2 * H + j], og = gr[3 * H + j];
        T dh = dyr[j];
        T dc_in = T(0);
        if (i < n_carry) {
          dh += dh_carry.data()[i * H + j];
          dc_in = dc_carry.data()[i * H + j];
        }
        const T dc = dh * og * (T(1) - tc[j] * tc[j]) + dc_in;
        const T cp = c_prev ? c_prev[i * H + j] : T(0);
        dg[j] = dc * cand * ig * (T(1) - ig);
        dg[H + j] = dc * cp * fg * (T(1) - fg);
        dg[2 * H + j] = dc * ig * (T(1) - cand * cand);
        dg[3 * H + j] = dh * tc[j] * og * (T(1) - og);
        dc_out[j] = dc * fg;
      }
    }
    if (t > 0) {
      std::fill_n(dh_next.data(), n * H, T(0));
      gemm_nn(ConstMatView<T>(dgates.data() + r0 * G, n, G, G), view(wh_->value),
              MatView<T>{dh_next.data(), n, H, H});
      if (drop) {
        const T* m = mask_.data() + r0 * H;
        for (std::size_t i = 0; i < n * H; ++i) dh_next.data()[i] *= m[i];
      }
      std::swap(dh_carry, dh_next);
      std::swap(dc_carry, dc_next);
    }
  }

  gemm_tn(view(std::as_const(dgates)), view(std::as_const(x_)), view(wx_->grad));
  gemm_tn(view(std::as_const(dgates)), view(std::as_const(feed_)), view(wh_->grad));
  add_column_sums(view(std::as_const(dgates)), b_->grad.data());
  Tensor<T> dx({total, din_});
  gemm_nn(view(std::as_const(dgates)), view(wx_->value), view(dx));
  return dx;
}

template <typename T>
BiLstm<T>::BiLstm(ParamStore<T>& store, const std::string& name, std::size_t din, std::size_t hidden, Rng& rng,
                  double recurrent_keep_prob, RecurrentDropout dropout_kind)
    : fwd_(store, name + ".fwd", din, hidden, rng, recurrent_keep_prob, dropout_kind),
      bwd_(store, name + ".bwd", din, hidden, rng, recurrent_keep_prob, dropout_kind) {}

template <typename T>
Tensor<T> BiLstm<T>::forward(ConstMatView<T> x, const PackedLayout& layout, Mode mode, Rng& rng) {
  const std::size_t H = hidden();
  reversal_ = layout.reversal();
  const Tensor<T> yf = fwd_.forward(x, layout, mode, rng);
  Tensor<T> xr({x.rows, x.cols});
  for (std::size_t r = 0; r < x.rows; ++r) std::copy_n(x.row(r), x.cols, xr.data() + reversal_[r] * x.cols);
  const Tensor<T> yr = bwd_.forward(view(std::as_const(xr)), layout, mode, rng);
  Tensor<T> y({x.rows, 2 * H});
  for (std::size_t r = 0; r < x.rows; ++r) {
    std::copy_n(yf.data() + r * H, H, y.data() + r * 2 * H);
    std::copy_n(yr.data() + reversal_[r] * H, H, y.data() + r * 2 * H + H);
  }
  return y;
}

template <typename T>
Tensor<T> BiLstm<T>::backward(ConstMatView<T> dy) {
  const std::size_t H = hidden();
  Tensor<T> dyf({dy.rows, H}), dyr({dy.rows, H});
  for (std::size_t r = 0; r < dy.rows; ++r) {
    std::copy_n(dy.row(r), H, dyf.data() + r * H);
    std::copy_n(dy.row(r) + H, H, dyr.data() + reversal_[r] * H);
  }
  Tensor<T> dx = fwd_.backward(view(std::as_const(dyf)));
  const Tensor<T> dxr = bwd_.backward(view(std::as_const(dyr)));
  const std::size_t din = dx.cols();
  for (std::size_t r = 0; r < dx.rows(); ++r) {
    T* dst = dx.data() + r * din;
    const T* src = dxr.data() + reversal_[r] * din;
    for (std::size_t j = 0; j < din; ++j) dst[j] += src[j];
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Highway

template <typename T>
Highway<T>::Highway(ParamStore<T>& store, const std::string& name, std::size_t dim, Rng& rng)
    : wh_(&store.add(name + ".transform.w", {dim, dim})),
      bh_(&store.add(name + ".transform.b", {dim})),
      wt_(&store.add(name + ".gate.w", {dim, dim})),
      bt_(&store.add(name + ".gate.b", {dim})),
      dim_(dim) {
  glorot_uniform(wh_->value, dim, dim, rng);
  glorot_uniform(wt_->value, dim, dim, rng);
  bt_->value.fill(T(-2));
}

template <typename T>
Tensor<T> Highway<T>::forward(ConstMatView<T> x) {
  if (x.cols != dim_) throw DimensionError(wh_->name + ": input width differs from layer width");
  const std::size_t n = x.rows;
  x_.reset({n, dim_});
  copy_block(x, view(x_));
  transform_.reset({n, dim_});
  gate_.reset({n, dim_});
  linear_forward(view(std::as_const(x_)), wh_->value, bh_->value, view(transform_));
  activate_inplace(Activation::kRelu, view(transform_));
  linear_forward(view(std::as_const(x_)), wt_->value, bt_->value, view(gate_));
  activate_inplace(Activation::kSigmoid, view(gate_));
  Tensor<T> y({n, dim_});
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = gate_[i] * transform_[i] + (T(1) - gate_[i]) * x_[i];
  }
  return y;
}

template <typename T>
Tensor<T> Highway<T>::backward(ConstMatView<T> dy) {
  const std::size_t n = x_.rows();
  Tensor<T> dz_transform({n, dim_}), dz_gate({n, dim_}), dx({n, dim_});
  for (std::size_t r = 0; r < n; ++r) {
    const T* d = dy.row(r);
    for (std::size_t j = 0; j < dim_; ++j) {
      const std::size_t i = r * dim_ + j;
      const T t = gate_[i], h = transform_[i];
      dz_transform[i] = h > T(0) ? d[j] * t : T(0);
      dz_gate[i] = d[j] * (h - x_[i]) * t * (T(1) - t);
      dx[i] = d[j] * (T(1) - t);
    }
  }
  MatView<T> dxv = view(dx);
  linear_backward(view(std::as_const(x_)), wh_->value, view(std::as_const(dz_transform)), wh_->grad, bh_->grad,
                  &dxv);
  linear_backward(view(std::as_const(x_)), wt_->value, view(std::as_const(dz_gate)), wt_->grad, bt_->grad, &dxv);
  return dx;
}

#define MORPHTAG_INSTANTIATE(T)                                                                            \
  template Tensor<T> embed<T>(const Tensor<T>&, std::size_t);                                              \
  template Tensor<T> affine<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Activation);          \
  template Tensor<T> conv1d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Activation,           \
                               std::span<const T>);                                                        \
  template PoolResult<T> max_pool_over_time<T>(const Tensor<T>&);                                          \
  template LstmState<T> lstm_step<T>(const Tensor<T>&, const LstmState<T>&, const LstmWeights<T>&);        \
  template Tensor<T> highway<T>(const Tensor<T>&, const HighwayWeights<T>&);                               \
  template Tensor<T> dropout<T>(const Tensor<T>&, double, Mode, Rng&);                                     \
  template void linear_forward<T>(ConstMatView<T>, const Tensor<T>&, const Tensor<T>&, MatView<T>);        \
  template void linear_backward<T>(ConstMatView<T>, const Tensor<T>&, ConstMatView<T>, Tensor<T>&,         \
                                   Tensor<T>&, MatView<T>*);                                               \
  template void gather_rows<T>(ConstMatView<T>, std::span<const std::size_t>, MatView<T>);                 \
  template void copy_block<T>(ConstMatView<T>, MatView<T>);                                                \
  template class Embedding<T>;                                                                             \
  template class Affine<T>;                                                                                \
  template class Dropout<T>;                                                                               \
  template class Conv1d<T>;                                                                                \
  template class MaxPoolOverTime<T>;                                                                       \
  template class Lstm<T>;                                                                                  \
  template class BiLstm<T>;                                                                                \
  template class Highway<T>;

MORPHTAG_INSTANTIATE(float)
MORPHTAG_INSTANTIATE(double)

#undef MORPHTAG_INSTANTIATE

}  // namespace morphtag
