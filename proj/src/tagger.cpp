#include "morphtag/tagger.hpp"

#include <cmath>
#include <map>

namespace morphtag {

void ModelConfig::validate() const {
  encoder.validate();
  if (context_layers == 0) throw ConfigError("context_layers must be positive");
  if (context_hidden == 0) throw ConfigError("context_hidden must be positive");
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) throw ConfigError("keep_prob must lie in (0, 1]");
}

namespace {

std::vector<int> char_ids(const std::string& word, const Vocabulary& chars) {
  std::vector<int> ids;
  for (const std::string& c : split_chars(word)) ids.push_back(chars.id_or(c, kUnkChar));
  if (ids.empty()) ids.push_back(kUnkChar);
  return ids;
}

}  // namespace

EncodedSentence encode_words(const std::vector<std::string>& words, const Vocabularies& vocab,
                             const EmbeddingTable* embeddings) {
  EncodedSentence e;
  for (const std::string& raw : words) {
    const std::string w = lowercase(raw);
    e.chars.push_back(char_ids(w, vocab.chars));
    e.words.push_back(vocab.words.id_or(w, kUnkWord));
    if (embeddings) e.pretrained.push_back(embeddings->lookup(w));
    e.tags.push_back(-1);
  }
  return e;
}

EncodedSentence encode_sentence(const Sentence& sentence, const Vocabularies& vocab,
                                const EmbeddingTable* embeddings) {
  EncodedSentence e = encode_words(sentence.words, vocab, embeddings);
  for (std::size_t i = 0; i < sentence.size(); ++i) e.tags[i] = vocab.tags.find(sentence.tags[i]);
  return e;
}

template <typename T>
std::vector<int> predict_tags(const TagDistribution<T>& dist) {
  std::vector<int> out(dist.rows());
  for (std::size_t r = 0; r < dist.rows(); ++r) {
    const auto row = dist.row(r);
    std::size_t best = 0;
    for (std::size_t k = 1; k < row.size(); ++k) {
      if (row[k] > row[best]) best = k;
    }
    out[r] = static_cast<int>(best);
  }
  return out;
}

template <typename T>
double sentence_loss(const TagDistribution<T>& dist, std::span<const int> gold) {
  if (gold.size() != dist.rows()) {
    throw DataError("sentence_loss: " + std::to_string(gold.size()) + " gold tags for " +
                    std::to_string(dist.rows()) + " positions");
  }
  double loss = 0.0;
  for (std::size_t r = 0; r < gold.size(); ++r) {
    if (gold[r] < 0 || static_cast<std::size_t>(gold[r]) >= dist.cols()) {
      throw IndexError("sentence_loss: gold tag " + std::to_string(gold[r]) + " outside inventory");
    }
    loss -= std::log(static_cast<double>(dist.at(r, static_cast<std::size_t>(gold[r]))));
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Context model

template <typename T>
ContextModel<T>::ContextModel(ParamStore<T>& store, const ModelConfig& cfg, std::size_t input_dim,
                              std::size_t tags, Rng& rng)
    : input_dim_(input_dim), tags_(tags), skip_(cfg.skip_connections), top_drop_(cfg.keep_prob) {
  if (tags == 0) throw ConfigError("tag inventory is empty");
  std::size_t din = input_dim;
  for (std::size_t i = 0; i < cfg.context_layers; ++i) {
    layers_.emplace_back(store, "context.blstm" + std::to_string(i), din, cfg.context_hidden, rng, cfg.keep_prob,
                         cfg.recurrent_dropout);
    drops_.emplace_back(cfg.keep_prob);
    din = 2 * cfg.context_hidden;
  }
  classifier_in_ = din + (skip_ ? input_dim : 0);
  classifier_ = Affine<T>(store, "output", classifier_in_, tags, Activation::kNone, rng);
}

template <typename T>
Tensor<T> ContextModel<T>::forward(ConstMatView<T> v, std::span<const std::size_t> lengths, Mode mode, Rng& rng) {
  if (v.cols != input_dim_) {
    throw ConfigError("word vectors have " + std::to_string(v.cols) + " columns, context model expects " +
                      std::to_string(input_dim_));
  }
  const PackedLayout layout = PackedLayout::from_lengths(lengths);
  if (layout.total != v.rows) throw DimensionError("context model: sentence lengths do not cover word vectors");
  to_packed_.assign(layout.total, 0);
  from_packed_.assign(layout.total, 0);
  std::size_t offset = 0;
  for (std::size_t s = 0; s < lengths.size(); ++s) {
    for (std::size_t t = 0; t < lengths[s]; ++t) {
      const std::size_t p = layout.row(s, t);
      to_packed_[p] = offset + t;
      from_packed_[offset + t] = p;
    }
    offset += lengths[s];
  }
  Tensor<T> x({layout.total, input_dim_});
  gather_rows(v, to_packed_, view(x));
  Tensor<T> packed_v;
  if (skip_) packed_v = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (i > 0) drops_[i].forward_inplace(view(x), mode, rng);
    x = layers_[i].forward(view(std::as_const(x)), layout, mode, rng);
  }
  top_drop_.forward_inplace(view(x), mode, rng);
  hidden_cols_ = x.cols();
  Tensor<T> features;
  if (skip_) {
    features.reset({layout.total, classifier_in_});
    copy_block(view(std::as_const(x)), view(features).block(0, layout.total, 0, hidden_cols_));
    copy_block(view(std::as_const(packed_v)), view(features).block(0, layout.total, hidden_cols_, input_dim_));
  } else {
    features = std::move(x);
  }
  const Tensor<T> logits = classifier_.forward(view(std::as_const(features)));
  Tensor<T> out({layout.total, tags_});
  gather_rows(view(logits), from_packed_, view(out));
  return out;
}

template <typename T>
Tensor<T> ContextModel<T>::backward(ConstMatView<T> d_logits) {
  const std::size_t total = to_packed_.size();
  Tensor<T> dl({total, tags_});
  gather_rows(d_logits, to_packed_, view(dl));
  const Tensor<T> d_features = classifier_.backward(view(std::as_const(dl)));
  Tensor<T> d({total, hidden_cols_});
  copy_block(view(d_features).block(0, total, 0, hidden_cols_), view(d));
  top_drop_.backward_inplace(view(d));
  for (std::size_t i = layers_.size(); i-- > 0;) {
    d = layers_[i].backward(view(std::as_const(d)));
    if (i > 0) drops_[i].backward_inplace(view(d));
  }
  if (skip_) {
    const ConstMatView<T> dv = view(d_features).block(0, total, hidden_cols_, input_dim_);
    for (std::size_t r = 0; r < total; ++r) {
      T* dst = d.data() + r * input_dim_;
      const T* src = dv.row(r);
      for (std::size_t j = 0; j < input_dim_; ++j) dst[j] += src[j];
    }
  }
  Tensor<T> out({total, input_dim_});
  gather_rows(view(std::as_const(d)), from_packed_, view(out));
  return out;
}

// ---------------------------------------------------------------------------
// Tagger

template <typename T>
Tagger<T>::Tagger(const ModelConfig& cfg, std::size_t char_vocab, std::size_t word_vocab, std::size_t tags,
                  std::size_t pretrained_rows, Rng& rng)
    : cfg_(cfg), char_drop_(cfg.keep_prob) {
  cfg_.validate();
  encoder_ = make_encoder<T>(cfg_.encoder, char_vocab, word_vocab, cfg_.keep_prob, cfg_.recurrent_dropout, params_,
                             rng);
  char_dim_ = encoder_ ? encoder_->output_dim() : 0;
  if (char_dim_ != cfg_.encoder.char_vector_dim()) {
    throw ConfigError("encoder output width differs from its configuration");
  }
  if (cfg_.encoder.pretrained != PretrainedMode::kNone) {
    if (pretrained_rows == 0) throw ConfigError("pretrained embeddings configured but none supplied");
    pretrained_ = Embedding<T>(params_, "pretrained.words", pretrained_rows, cfg_.encoder.pretrained_dim, rng,
                               cfg_.encoder.pretrained == PretrainedMode::kFinetuned);
    has_pretrained_ = true;
  }
  context_ = ContextModel<T>(params_, cfg_, cfg_.encoder.output_dim(), tags, rng);
}

template <typename T>
void Tagger<T>::set_pretrained(const Tensor<float>& vectors) {
  if (!has_pretrained_) throw ConfigError("model has no pretrained embedding table");
  Param<T>& table = pretrained_.table();
  if (vectors.shape() != table.value.shape()) {
    throw DimensionError("pretrained vectors " + shape_string(vectors.shape()) + " do not match table " +
                         shape_string(table.value.shape()));
  }
  for (std::size_t i = 0; i < vectors.size(); ++i) table.value[i] = static_cast<T>(vectors[i]);
}

template <typename T>
Tensor<T> Tagger<T>::word_vectors(std::span<const EncodedSentence* const> batch, Mode mode, Rng& rng) {
  std::size_t total = 0;
  for (const EncodedSentence* s : batch) {
    if (s->size() == 0) throw DataError("empty sentence in batch");
    if (s->words.size() != s->size()) throw DataError("encoded sentence has inconsistent lengths");
    total += s->size();
  }
  const std::size_t dv = cfg_.encoder.output_dim();
  Tensor<T> v({total, dv});

  if (encoder_) {
    // Encode each distinct input once.
    const bool by_word = cfg_.encoder.kind == EncoderKind::kLut;
    std::map<std::vector<int>, std::size_t> seen_chars;
    std::map<int, std::size_t> seen_words;
    WordBatch unique;
    token_to_unique_.assign(total, 0);
    std::size_t tok = 0;
    for (const EncodedSentence* s : batch) {
      for (std::size_t i = 0; i < s->size(); ++i, ++tok) {
        if (by_word) {
          auto [it, inserted] = seen_words.emplace(s->words[i], unique.words.size());
          if (inserted) unique.words.push_back(s->words[i]);
          token_to_unique_[tok] = it->second;
        } else {
          auto [it, inserted] = seen_chars.emplace(s->chars[i], unique.chars.size());
          if (inserted) unique.chars.push_back(s->chars[i]);
          token_to_unique_[tok] = it->second;
        }
      }
    }
    unique_count_ = unique.size();
    const Tensor<T> enc = encoder_->forward(unique, mode, rng);
    Tensor<T> chars({total, char_dim_});
    gather_rows(view(enc), token_to_unique_, view(chars));
    if (!by_word) char_drop_.forward_inplace(view(chars), mode, rng);
    copy_block(view(std::as_const(chars)), view(v).block(0, total, 0, char_dim_));
  }
  if (has_pretrained_) {
    pretrained_ids_.clear();
    for (const EncodedSentence* s : batch) {
      if (s->pretrained.size() != s->size()) throw DataError("sentence lacks pretrained embedding ids");
      pretrained_ids_.insert(pretrained_ids_.end(), s->pretrained.begin(), s->pretrained.end());
    }
    const Tensor<T> e = pretrained_.lookup(pretrained_ids_);
    copy_block(view(e), view(v).block(0, total, char_dim_, e.cols()));
  }
  return v;
}

template <typename T>
Tensor<T> Tagger<T>::forward(std::span<const EncodedSentence* const> batch, Mode mode, Rng& rng) {
  const Tensor<T> v = word_vectors(batch, mode, rng);
  std::vector<std::size_t> lengths;
  lengths.reserve(batch.size());
  for (const EncodedSentence* s : batch) lengths.push_back(s->size());
  return context_.forward(view(v), lengths, mode, rng);
}

template <typename T>
void Tagger<T>::backward(ConstMatView<T> d_logits) {
  const Tensor<T> dv = context_.backward(d_logits);
  const std::size_t total = dv.rows();
  if (encoder_) {
    Tensor<T> dchars({total, char_dim_});
    copy_block(view(dv).block(0, total, 0, char_dim_), view(dchars));
    if (cfg_.encoder.kind != EncoderKind::kLut) char_drop_.backward_inplace(view(dchars));
    Tensor<T> dunique({unique_count_, char_dim_});
    for (std::size_t t = 0; t < total; ++t) {
      T* dst = dunique.data() + token_to_unique_[t] * char_dim_;
      const T* src = dchars.data() + t * char_dim_;
      for (std::size_t j = 0; j < char_dim_; ++j) dst[j] += src[j];
    }
    encoder_->backward(view(std::as_const(dunique)));
  }
  if (has_pretrained_) {
    pretrained_.accumulate(pretrained_ids_, view(dv).block(0, total, char_dim_, dv.cols() - char_dim_));
  }
}

template <typename T>
BatchLoss Tagger<T>::loss_and_gradient(std::span<const EncodedSentence* const> batch, Mode mode, Rng& rng) {
  Tensor<T> logits = forward(batch, mode, rng);
  BatchLoss out;
  out.sentence_losses.assign(batch.size(), 0.0);
  Tensor<T> d({logits.rows(), logits.cols()});
  std::size_t row = 0;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    const EncodedSentence& sent = *batch[s];
    if (sent.tags.size() != sent.size()) throw DataError("gold tag count differs from sentence length");
    for (std::size_t i = 0; i < sent.size(); ++i, ++row) {
      const int gold = sent.tags[i];
      const std::span<const T> l = logits.row(row);
      if (gold < 0 || static_cast<std::size_t>(gold) >= l.size()) {
        throw DataError("training token without a tag from the inventory");
      }
      const T loss = cross_entropy_from_logits(l, static_cast<std::size_t>(gold));
      out.sentence_losses[s] += static_cast<double>(loss);
      softmax<T>(l, d.row(row));
      d.at(row, static_cast<std::size_t>(gold)) -= T(1);
    }
  }
  out.tokens = row;
  const T scale = T(1) / static_cast<T>(row);
  for (T& g : d.values()) g *= scale;
  backward(view(std::as_const(d)));
  return out;
}

template <typename T>
BatchLoss Tagger<T>::loss(std::span<const EncodedSentence* const> batch) {
  const std::vector<TagDistribution<T>> dists = distributions(batch);
  BatchLoss out;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    out.sentence_losses.push_back(sentence_loss(dists[s], batch[s]->tags));
    out.tokens += batch[s]->size();
  }
  return out;
}

template <typename T>
std::vector<TagDistribution<T>> Tagger<T>::distributions(std::span<const EncodedSentence* const> batch) {
  Rng unused(0);
  const Tensor<T> logits = forward(batch, Mode::kEval, unused);
  std::vector<TagDistribution<T>> out;
  std::size_t row = 0;
  for (const EncodedSentence* s : batch) {
    Tensor<T> dist({s->size(), logits.cols()});
    for (std::size_t i = 0; i < s->size(); ++i, ++row) softmax<T>(logits.row(row), dist.row(i));
    out.push_back(std::move(dist));
  }
  return out;
}

template <typename T>
std::vector<std::vector<int>> Tagger<T>::predict(std::span<const EncodedSentence* const> batch) {
  std::vector<std::vector<int>> out;
  for (const TagDistribution<T>& d : distributions(batch)) out.push_back(predict_tags(d));
  return out;
}

#define MORPHTAG_INSTANTIATE(T)                                                  \
  template std::vector<int> predict_tags<T>(const TagDistribution<T>&);          \
  template double sentence_loss<T>(const TagDistribution<T>&, std::span<const int>); \
  template class ContextModel<T>;                                                \
  template class Tagger<T>;

MORPHTAG_INSTANTIATE(float)
MORPHTAG_INSTANTIATE(double)

#undef MORPHTAG_INSTANTIATE

}  // namespace morphtag
