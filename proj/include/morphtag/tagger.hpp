#pragma once

#include <memory>
#include <span>
#include <vector>

#include "morphtag/data.hpp"
#include "morphtag/encoders.hpp"

namespace morphtag {

struct ModelConfig {
  EncoderConfig encoder = EncoderConfig::defaults(EncoderKind::kCnn);
  std::size_t context_layers = 2;
  std::size_t context_hidden = 256;  // per direction
  bool skip_connections = false;
  Tagset tagset = Tagset::kPosMorph;
  double keep_prob = 0.7;
  RecurrentDropout recurrent_dropout = RecurrentDropout::kPerStep;

  // Width of the per-position classifier input.
  std::size_t classifier_input_dim() const {
    return 2 * context_hidden + (skip_connections ? encoder.output_dim() : 0);
  }
  void validate() const;
};

// A sentence mapped to vocabulary ids.
struct EncodedSentence {
  std::vector<std::vector<int>> chars;  // per word, unpadded
  std::vector<int> words;               // word vocabulary ids
  std::vector<int> pretrained;          // embedding table rows (empty without embeddings)
  std::vector<int> tags;                // -1 for tags outside the inventory

  std::size_t size() const { return chars.size(); }
};

EncodedSentence encode_sentence(const Sentence& sentence, const Vocabularies& vocab,
                                const EmbeddingTable* embeddings = nullptr);
// Tokens without gold tags.
EncodedSentence encode_words(const std::vector<std::string>& words, const Vocabularies& vocab,
                             const EmbeddingTable* embeddings = nullptr);

// Per-position distributions over the tag inventory, one row per word.
template <typename T>
using TagDistribution = Tensor<T>;

// Position-wise argmax; ties go to the lowest tag id.
template <typename T>
std::vector<int> predict_tags(const TagDistribution<T>& dist);

// Sum over positions of -log p(gold).
template <typename T>
double sentence_loss(const TagDistribution<T>& dist, std::span<const int> gold);

// Two-layer (by default) BLSTM over word vectors with a position-wise
// softmax classifier. Sentences of a batch are packed by length.
template <typename T>
class ContextModel {
 public:
  ContextModel() = default;
  ContextModel(ParamStore<T>& store, const ModelConfig& cfg, std::size_t input_dim, std::size_t tags, Rng& rng);

  std::size_t input_dim() const { return input_dim_; }
  std::size_t tags() const { return tags_; }
  std::size_t classifier_input_dim() const { return classifier_in_; }

  // v holds the word vectors of all sentences back to back; returns logits
  // in the same row order.
  Tensor<T> forward(ConstMatView<T> v, std::span<const std::size_t> lengths, Mode mode, Rng& rng);
  // Returns dL/dv.
  Tensor<T> backward(ConstMatView<T> d_logits);

  BiLstm<T>& layer(std::size_t i) { return layers_[i]; }

 private:
  std::size_t input_dim_ = 0;
  std::size_t tags_ = 0;
  std::size_t classifier_in_ = 0;
  bool skip_ = false;
  std::vector<BiLstm<T>> layers_;
  std::vector<Dropout<T>> drops_;  // inputs of layers >= 1
  Dropout<T> top_drop_;
  Affine<T> classifier_;
  std::vector<std::size_t> to_packed_;  // packed row -> sentence-order row
  std::vector<std::size_t> from_packed_;
  std::size_t hidden_cols_ = 0;
};

struct BatchLoss {
  std::vector<double> sentence_losses;
  std::size_t tokens = 0;

  double total() const {
    double s = 0.0;
    for (const double l : sentence_losses) s += l;
    return s;
  }
};

template <typename T>
class Tagger {
 public:
  // pretrained_rows is the embedding table height (0 without embeddings).
  Tagger(const ModelConfig& cfg, std::size_t char_vocab, std::size_t word_vocab, std::size_t tags,
         std::size_t pretrained_rows, Rng& rng);

  const ModelConfig& config() const { return cfg_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }
  std::size_t tag_count() const { return context_.tags(); }

  // Copies pre-trained vectors into the embedding parameter.
  void set_pretrained(const Tensor<float>& vectors);

  // Word vectors of every token of the batch, sentence by sentence.
  Tensor<T> word_vectors(std::span<const EncodedSentence* const> batch, Mode mode, Rng& rng);
  // Logits, one row per token, sentence by sentence.
  Tensor<T> forward(std::span<const EncodedSentence* const> batch, Mode mode, Rng& rng);
  void backward(ConstMatView<T> d_logits);

  // Loss with gradients accumulated into params (scaled by 1 / token count).
  BatchLoss loss_and_gradient(std::span<const EncodedSentence* const> batch, Mode mode, Rng& rng);
  // Evaluation-mode losses, no gradients.
  BatchLoss loss(std::span<const EncodedSentence* const> batch);
  std::vector<TagDistribution<T>> distributions(std::span<const EncodedSentence* const> batch);
  std::vector<std::vector<int>> predict(std::span<const EncodedSentence* const> batch);

 private:
  ModelConfig cfg_;
  ParamStore<T> params_;
  std::unique_ptr<WordEncoder<T>> encoder_;
  Embedding<T> pretrained_;
  bool has_pretrained_ = false;
  Dropout<T> char_drop_;
  ContextModel<T> context_;

  // Unique character/word inputs of the last batch and the token -> unique map.
  std::vector<std::size_t> token_to_unique_;
  std::size_t unique_count_ = 0;
  std::vector<int> pretrained_ids_;
  std::size_t char_dim_ = 0;
};

}  // namespace morphtag
