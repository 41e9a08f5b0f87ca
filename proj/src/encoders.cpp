#include "morphtag/encoders.hpp"

#include <algorithm>

namespace morphtag {

EncoderKind parse_encoder_kind(std::string_view name) {
  if (name == "none") return EncoderKind::kNone;
  if (name == "lut") return EncoderKind::kLut;
  if (name == "dnn") return EncoderKind::kDnn;
  if (name == "cnn") return EncoderKind::kCnn;
  if (name == "cnnhighway") return EncoderKind::kCnnHighway;
  if (name == "lstm") return EncoderKind::kLstm;
  if (name == "blstm") return EncoderKind::kBlstm;
  throw ConfigError("unknown encoder '" + std::string(name) + "' (expected none, lut, dnn, cnn, cnnhighway, lstm, blstm)");
}

std::string_view encoder_kind_name(EncoderKind kind) {
  switch (kind) {
    case EncoderKind::kNone:
      return "none";
    case EncoderKind::kLut:
      return "lut";
    case EncoderKind::kDnn:
      return "dnn";
    case EncoderKind::kCnn:
      return "cnn";
    case EncoderKind::kCnnHighway:
      return "cnnhighway";
    case EncoderKind::kLstm:
      return "lstm";
    case EncoderKind::kBlstm:
      return "blstm";
  }
  return "none";
}

PretrainedMode parse_pretrained_mode(std::string_view name) {
  if (name == "none") return PretrainedMode::kNone;
  if (name == "fixed") return PretrainedMode::kFixed;
  if (name == "finetuned") return PretrainedMode::kFinetuned;
  throw ConfigError("unknown pretrained mode '" + std::string(name) + "' (expected none, fixed, finetuned)");
}

std::string_view pretrained_mode_name(PretrainedMode mode) {
  switch (mode) {
    case PretrainedMode::kFixed:
      return "fixed";
    case PretrainedMode::kFinetuned:
      return "finetuned";
    case PretrainedMode::kNone:
      break;
  }
  return "none";
}

EncoderConfig EncoderConfig::defaults(EncoderKind kind) {
  EncoderConfig c;
  c.kind = kind;
  switch (kind) {
    case EncoderKind::kDnn:
      c.hidden = {256};
      break;
    case EncoderKind::kCnnHighway:
      c.char_dim = 15;
      break;
    case EncoderKind::kLstm:
      c.hidden = {1024, 256};
      break;
    case EncoderKind::kBlstm:
      c.hidden = {256, 256};
      break;
    default:
      break;
  }
  return c;
}

std::vector<std::size_t> EncoderConfig::highway_filter_counts() const {
  std::vector<std::size_t> counts;
  for (std::size_t w = highway_min_width; w <= highway_max_width; ++w) counts.push_back(num_filters(w, *this));
  return counts;
}

std::size_t EncoderConfig::char_vector_dim() const {
  switch (kind) {
    case EncoderKind::kNone:
      return 0;
    case EncoderKind::kLut:
      return word_dim;
    case EncoderKind::kDnn:
    case EncoderKind::kLstm:
      return hidden.empty() ? 0 : hidden.back();
    case EncoderKind::kBlstm:
      return hidden.empty() ? 0 : 2 * hidden.back();
    case EncoderKind::kCnn:
      return conv_filters;
    case EncoderKind::kCnnHighway: {
      std::size_t total = 0;
      for (const std::size_t n : highway_filter_counts()) total += n;
      return total;
    }
  }
  return 0;
}

std::size_t EncoderConfig::output_dim() const {
  return char_vector_dim() + (pretrained == PretrainedMode::kNone ? 0 : pretrained_dim);
}

void EncoderConfig::validate() const {
  if (kind == EncoderKind::kNone && pretrained == PretrainedMode::kNone) {
    throw ConfigError("word vector would be empty: no encoder and no pretrained embeddings");
  }
  if (pretrained != PretrainedMode::kNone && pretrained_dim == 0) {
    throw ConfigError("pretrained embeddings requested but their dimension is unknown");
  }
  const bool uses_chars = kind != EncoderKind::kNone && kind != EncoderKind::kLut;
  if (uses_chars && char_dim == 0) throw ConfigError("char_dim must be positive");
  if (kind == EncoderKind::kLut && word_dim == 0) throw ConfigError("word_dim must be positive");
  if ((kind == EncoderKind::kDnn || kind == EncoderKind::kLstm || kind == EncoderKind::kBlstm)) {
    if (hidden.empty()) throw ConfigError(std::string(encoder_kind_name(kind)) + " needs at least one hidden layer");
    for (const std::size_t h : hidden) {
      if (h == 0) throw ConfigError("hidden layer widths must be positive");
    }
  }
  if (kind == EncoderKind::kDnn && max_word_len == 0) throw ConfigError("max_word_len must be positive");
  if (kind == EncoderKind::kCnn && (conv_layers == 0 || conv_filters == 0 || conv_width == 0)) {
    throw ConfigError("cnn needs positive conv_layers, conv_filters and conv_width");
  }
  if (kind == EncoderKind::kCnnHighway) {
    if (highway_min_width == 0 || highway_min_width > highway_max_width) {
      throw ConfigError("highway filter widths must satisfy 1 <= min <= max");
    }
    if (highway_filters_per_width == 0 || highway_max_filters == 0) {
      throw ConfigError("highway filter counts must be positive");
    }
  }
}

std::size_t num_filters(std::size_t width, const EncoderConfig& config) {
  if (width < config.highway_min_width || width > config.highway_max_width) {
    throw ConfigError("filter width " + std::to_string(width) + " outside configured range [" +
                      std::to_string(config.highway_min_width) + ", " + std::to_string(config.highway_max_width) +
                      "]");
  }
  return std::min(config.highway_max_filters, config.highway_filters_per_width * width);
}

std::vector<int> fixed_length_chars(const std::vector<int>& chars, std::size_t length) {
  std::vector<int> out(length, kPadChar);
  const std::size_t keep = std::min(chars.size(), length);
  std::copy(chars.end() - static_cast<std::ptrdiff_t>(keep), chars.end(), out.begin());
  return out;
}

std::vector<int> pad_chars(const std::vector<int>& chars, std::size_t min_length) {
  std::vector<int> out = chars;
  if (out.size() < min_length) out.resize(min_length, kPadChar);
  return out;
}

template <typename T>
Tensor<T> compose_word_vector(const std::optional<Tensor<T>>& char_vec, const std::optional<Tensor<T>>& word_vec) {
  if (!char_vec && !word_vec) throw ConfigError("compose_word_vector: both parts absent");
  std::vector<T> out;
  if (char_vec) out.insert(out.end(), char_vec->values().begin(), char_vec->values().end());
  if (word_vec) out.insert(out.end(), word_vec->values().begin(), word_vec->values().end());
  const std::size_t n = out.size();
  return Tensor<T>({n}, std::move(out));
}

namespace {

template <typename T>
void check_batch_chars(const WordBatch& batch) {
  for (const auto& w : batch.chars) {
    if (w.empty()) throw DataError("character encoder received an empty word");
  }
}

template <typename T>
class LutEncoder final : public WordEncoder<T> {
 public:
  LutEncoder(const EncoderConfig& cfg, std::size_t word_vocab, ParamStore<T>& store, Rng& rng)
      : table_(store, "encoder.words", word_vocab, cfg.word_dim, rng) {}

  std::size_t output_dim() const override { return table_.dim(); }

  Tensor<T> forward(const WordBatch& batch, Mode, Rng&) override { return table_.forward(batch.words); }

  void backward(ConstMatView<T> d_out) override { table_.backward(d_out); }

 private:
  Embedding<T> table_;
};

template <typename T>
class DnnEncoder final : public WordEncoder<T> {
 public:
  DnnEncoder(const EncoderConfig& cfg, std::size_t char_vocab, double keep_prob, ParamStore<T>& store, Rng& rng)
      : chars_(store, "encoder.chars", char_vocab, cfg.char_dim, rng), max_len_(cfg.max_word_len) {
    std::size_t din = cfg.max_word_len * cfg.char_dim;
    for (std::size_t i = 0; i < cfg.hidden.size(); ++i) {
      layers_.emplace_back(store, "encoder.fc" + std::to_string(i), din, cfg.hidden[i], Activation::kTanh, rng);
      din = cfg.hidden[i];
    }
    drops_.assign(layers_.size(), Dropout<T>(keep_prob));
  }

  std::size_t output_dim() const override { return layers_.back().output_dim(); }

  Tensor<T> forward(const WordBatch& batch, Mode mode, Rng& rng) override {
    check_batch_chars<T>(batch);
    std::vector<int> ids;
    ids.reserve(batch.chars.size() * max_len_);
    for (const auto& w : batch.chars) {
      const std::vector<int> fixed = fixed_length_chars(w, max_len_);
      ids.insert(ids.end(), fixed.begin(), fixed.end());
    }
    Tensor<T> x = chars_.forward(ids);
    x.reshape({batch.chars.size(), max_len_ * chars_.dim()});
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      if (i > 0) drops_[i].forward_inplace(view(x), mode, rng);
      x = layers_[i].forward(view(std::as_const(x)));
    }
    return x;
  }

  void backward(ConstMatView<T> d_out) override {
    Tensor<T> d({d_out.rows, d_out.cols});
    copy_block(d_out, view(d));
    for (std::size_t i = layers_.size(); i-- > 0;) {
      d = layers_[i].backward(view(std::as_const(d)));
      if (i > 0) drops_[i].backward_inplace(view(d));
    }
    d.reshape({d.rows() * max_len_, chars_.dim()});
    chars_.backward(view(std::as_const(d)));
  }

 private:
  Embedding<T> chars_;
  std::size_t max_len_;
  std::vector<Affine<T>> layers_;
  std::vector<Dropout<T>> drops_;
};

// Embeds each word right-padded to at least min_len characters.
template <typename T>
Tensor<T> embed_padded(const Embedding<T>& table, const WordBatch& batch, std::size_t min_len,
                       std::vector<int>* ids, RaggedLayout* layout) {
  std::vector<std::size_t> lengths;
  lengths.reserve(batch.chars.size());
  ids->clear();
  for (const auto& w : batch.chars) {
    const std::vector<int> p = pad_chars(w, min_len);
    lengths.push_back(p.size());
    ids->insert(ids->end(), p.begin(), p.end());
  }
  *layout = RaggedLayout::from_lengths(lengths);
  return table.lookup(*ids);
}

template <typename T>
class CnnEncoder final : public WordEncoder<T> {
 public:
  CnnEncoder(const EncoderConfig& cfg, std::size_t char_vocab, double keep_prob, ParamStore<T>& store, Rng& rng)
      : chars_(store, "encoder.chars", char_vocab, cfg.char_dim, rng) {
    std::size_t din = cfg.char_dim;
    for (std::size_t i = 0; i < cfg.conv_layers; ++i) {
      convs_.emplace_back(store, "encoder.conv" + std::to_string(i), din, cfg.conv_width, cfg.conv_filters,
                          Activation::kRelu, rng);
      din = cfg.conv_filters;
    }
    drops_.assign(convs_.size(), Dropout<T>(keep_prob));
  }

  std::size_t output_dim() const override { return convs_.back().filters(); }

  Tensor<T> forward(const WordBatch& batch, Mode mode, Rng& rng) override {
    check_batch_chars<T>(batch);
    RaggedLayout layout;
    Tensor<T> x = embed_padded(chars_, batch, convs_.front().width(), &ids_, &layout);
    layouts_.assign(1, layout);
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      if (i > 0) drops_[i].forward_inplace(view(x), mode, rng);
      RaggedLayout next;
      x = convs_[i].forward(view(std::as_const(x)), layouts_.back(), &next);
      layouts_.push_back(std::move(next));
    }
    return pool_.forward(view(std::as_const(x)), layouts_.back());
  }

  void backward(ConstMatView<T> d_out) override {
    Tensor<T> d = pool_.backward(d_out);
    for (std::size_t i = convs_.size(); i-- > 0;) {
      d = convs_[i].backward(view(std::as_const(d)));
      if (i > 0) drops_[i].backward_inplace(view(d));
    }
    chars_.accumulate(ids_, view(std::as_const(d)));
  }

 private:
  Embedding<T> chars_;
  std::vector<Conv1d<T>> convs_;
  std::vector<Dropout<T>> drops_;
  MaxPoolOverTime<T> pool_;
  std::vector<int> ids_;
  std::vector<RaggedLayout> layouts_;
};

template <typename T>
class HighwayCnnEncoder final : public WordEncoder<T> {
 public:
  HighwayCnnEncoder(const EncoderConfig& cfg, std::size_t char_vocab, double keep_prob, ParamStore<T>& store,
                    Rng& rng)
      : chars_(store, "encoder.chars", char_vocab, cfg.char_dim, rng) {
    for (std::size_t w = cfg.highway_min_width; w <= cfg.highway_max_width; ++w) {
      Branch b;
      b.conv = Conv1d<T>(store, "encoder.conv_w" + std::to_string(w), cfg.char_dim, w, num_filters(w, cfg),
                         Activation::kTanh, rng);
      branches_.push_back(std::move(b));
      dim_ += branches_.back().conv.filters();
    }
    for (std::size_t i = 0; i < cfg.highway_layers; ++i) {
      highways_.emplace_back(store, "encoder.highway" + std::to_string(i), dim_, rng);
    }
    drops_.assign(highways_.size(), Dropout<T>(keep_prob));
  }

  std::size_t output_dim() const override { return dim_; }

  Tensor<T> forward(const WordBatch& batch, Mode mode, Rng& rng) override {
    check_batch_chars<T>(batch);
    const std::size_t n = batch.chars.size();
    Tensor<T> x({n, dim_});
    std::size_t col = 0;
    for (Branch& b : branches_) {
      RaggedLayout in, out;
      const Tensor<T> e = embed_padded(chars_, batch, b.conv.width(), &b.ids, &in);
      const Tensor<T> y = b.conv.forward(view(e), in, &out);
      const Tensor<T> pooled = b.pool.forward(view(y), out);
      copy_block(view(pooled), view(x).block(0, n, col, pooled.cols()));
      col += pooled.cols();
    }
    for (std::size_t i = 0; i < highways_.size(); ++i) {
      drops_[i].forward_inplace(view(x), mode, rng);
      x = highways_[i].forward(view(std::as_const(x)));
    }
    return x;
  }

  void backward(ConstMatView<T> d_out) override {
    Tensor<T> d({d_out.rows, d_out.cols});
    copy_block(d_out, view(d));
    for (std::size_t i = highways_.size(); i-- > 0;) {
      d = highways_[i].backward(view(std::as_const(d)));
      drops_[i].backward_inplace(view(d));
    }
    std::size_t col = 0;
    for (Branch& b : branches_) {
      const std::size_t f = b.conv.filters();
      const Tensor<T> dx = b.conv.backward(view(b.pool.backward(view(std::as_const(d)).block(0, d.rows(), col, f))));
      chars_.accumulate(b.ids, view(dx));
      col += f;
    }
  }

 private:
  struct Branch {
    Conv1d<T> conv;
    MaxPoolOverTime<T> pool;
    std::vector<int> ids;
  };

  Embedding<T> chars_;
  std::vector<Branch> branches_;
  std::vector<Highway<T>> highways_;
  std::vector<Dropout<T>> drops_;
  std::size_t dim_ = 0;
};

// Packs char ids of all words time-major (see PackedLayout).
inline std::vector<int> pack_chars(const WordBatch& batch, const PackedLayout& layout) {
  std::vector<int> ids(layout.total);
  for (std::size_t t = 0; t < layout.steps(); ++t) {
    for (std::size_t s = 0; s < layout.batch_sizes[t]; ++s) {
      ids[layout.offsets[t] + s] = batch.chars[layout.order[s]][t];
    }
  }
  return ids;
}

inline PackedLayout char_layout(const WordBatch& batch) {
  std::vector<std::size_t> lengths;
  lengths.reserve(batch.chars.size());
  for (const auto& w : batch.chars) lengths.push_back(w.size());
  return PackedLayout::from_lengths(lengths);
}

// Deep unidirectional or bidirectional character LSTM.
template <typename T, typename Layer>
class RecurrentEncoder final : public WordEncoder<T> {
 public:
  static constexpr bool kBidirectional = std::is_same_v<Layer, BiLstm<T>>;

  RecurrentEncoder(const EncoderConfig& cfg, std::size_t char_vocab, double keep_prob,
                   RecurrentDropout recurrent_dropout, ParamStore<T>& store, Rng& rng)
      : chars_(store, "encoder.chars", char_vocab, cfg.char_dim, rng) {
    std::size_t din = cfg.char_dim;
    for (std::size_t i = 0; i < cfg.hidden.size(); ++i) {
      layers_.emplace_back(store, "encoder.lstm" + std::to_string(i), din, cfg.hidden[i], rng, keep_prob,
                           recurrent_dropout);
      din = kBidirectional ? 2 * cfg.hidden[i] : cfg.hidden[i];
    }
    drops_.assign(layers_.size(), Dropout<T>(keep_prob));
  }

  std::size_t output_dim() const override {
    return kBidirectional ? 2 * layers_.back().hidden() : layers_.back().hidden();
  }

  Tensor<T> forward(const WordBatch& batch, Mode mode, Rng& rng) override {
    check_batch_chars<T>(batch);
    layout_ = char_layout(batch);
    Tensor<T> x = chars_.forward(pack_chars(batch, layout_));
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      if (i > 0) drops_[i].forward_inplace(view(x), mode, rng);
      x = layers_[i].forward(view(std::as_const(x)), layout_, mode, rng);
    }
    const std::size_t n = batch.chars.size(), width = x.cols();
    const std::size_t H = layers_.back().hidden();
    Tensor<T> out({n, output_dim()});
    for (std::size_t w = 0; w < n; ++w) {
      const std::size_t last = layout_.row(w, layout_.lengths[w] - 1);
      std::copy_n(x.data() + last * width, H, out.data() + w * out.cols());
      if constexpr (kBidirectional) {
        const std::size_t first = layout_.row(w, 0);
        std::copy_n(x.data() + first * width + H, H, out.data() + w * out.cols() + H);
      }
    }
    top_width_ = width;
    return out;
  }

  void backward(ConstMatView<T> d_out) override {
    const std::size_t H = layers_.back().hidden();
    Tensor<T> d({layout_.total, top_width_});
    for (std::size_t w = 0; w < d_out.rows; ++w) {
      const std::size_t last = layout_.row(w, layout_.lengths[w] - 1);
      const T* src = d_out.row(w);
      T* dst = d.data() + last * top_width_;
      for (std::size_t j = 0; j < H; ++j) dst[j] += src[j];
      if constexpr (kBidirectional) {
        const std::size_t first = layout_.row(w, 0);
        T* dst_b = d.data() + first * top_width_ + H;
        for (std::size_t j = 0; j < H; ++j) dst_b[j] += src[H + j];
      }
    }
    for (std::size_t i = layers_.size(); i-- > 0;) {
      d = layers_[i].backward(view(std::as_const(d)));
      if (i > 0) drops_[i].backward_inplace(view(d));
    }
    chars_.backward(view(std::as_const(d)));
  }

 private:
  Embedding<T> chars_;
  std::vector<Layer> layers_;
  std::vector<Dropout<T>> drops_;
  PackedLayout layout_;
  std::size_t top_width_ = 0;
};

}  // namespace

template <typename T>
std::unique_ptr<WordEncoder<T>> make_encoder(const EncoderConfig& cfg, std::size_t char_vocab,
                                             std::size_t word_vocab, double keep_prob,
                                             RecurrentDropout recurrent_dropout, ParamStore<T>& store, Rng& rng) {
  cfg.validate();
  switch (cfg.kind) {
    case EncoderKind::kNone:
      return nullptr;
    case EncoderKind::kLut:
      return std::make_unique<LutEncoder<T>>(cfg, word_vocab, store, rng);
    case EncoderKind::kDnn:
      return std::make_unique<DnnEncoder<T>>(cfg, char_vocab, keep_prob, store, rng);
    case EncoderKind::kCnn:
      return std::make_unique<CnnEncoder<T>>(cfg, char_vocab, keep_prob, store, rng);
    case EncoderKind::kCnnHighway:
      return std::make_unique<HighwayCnnEncoder<T>>(cfg, char_vocab, keep_prob, store, rng);
    case EncoderKind::kLstm:
      return std::make_unique<RecurrentEncoder<T, Lstm<T>>>(cfg, char_vocab, keep_prob, recurrent_dropout, store,
                                                            rng);
    case EncoderKind::kBlstm:
      return std::make_unique<RecurrentEncoder<T, BiLstm<T>>>(cfg, char_vocab, keep_prob, recurrent_dropout, store,
                                                              rng);
  }
  return nullptr;
}

#define MORPHTAG_INSTANTIATE(T)                                                                                \
  template std::unique_ptr<WordEncoder<T>> make_encoder<T>(const EncoderConfig&, std::size_t, std::size_t,    \
                                                           double, RecurrentDropout, ParamStore<T>&, Rng&);  \
  template Tensor<T> compose_word_vector<T>(const std::optional<Tensor<T>>&, const std::optional<Tensor<T>>&);

MORPHTAG_INSTANTIATE(float)
MORPHTAG_INSTANTIATE(double)

#undef MORPHTAG_INSTANTIATE

}  // namespace morphtag
