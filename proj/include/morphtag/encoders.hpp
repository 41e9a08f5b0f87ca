#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "morphtag/layers.hpp"

namespace morphtag {

// Reserved character ids.
inline constexpr int kPadChar = 0;
inline constexpr int kUnkChar = 1;
// Reserved word id.
inline constexpr int kUnkWord = 0;

enum class EncoderKind { kNone, kLut, kDnn, kCnn, kCnnHighway, kLstm, kBlstm };
enum class PretrainedMode { kNone, kFixed, kFinetuned };

EncoderKind parse_encoder_kind(std::string_view name);
std::string_view encoder_kind_name(EncoderKind kind);
PretrainedMode parse_pretrained_mode(std::string_view name);
std::string_view pretrained_mode_name(PretrainedMode mode);

inline constexpr EncoderKind kAllEncoderKinds[] = {EncoderKind::kLut, EncoderKind::kDnn,
                                                   EncoderKind::kCnn, EncoderKind::kCnnHighway,
                                                   EncoderKind::kLstm, EncoderKind::kBlstm};

struct EncoderConfig {
  EncoderKind kind = EncoderKind::kCnn;
  std::size_t char_dim = 128;
  std::size_t word_dim = 128;           // LUT row width
  std::vector<std::size_t> hidden;      // DNN layer widths; LSTM/BLSTM layer widths
  std::size_t max_word_len = 20;        // DNN input length
  std::size_t conv_layers = 2;
  std::size_t conv_filters = 256;
  std::size_t conv_width = 5;
  std::size_t highway_min_width = 1;
  std::size_t highway_max_width = 7;
  std::size_t highway_filters_per_width = 50;
  std::size_t highway_max_filters = 200;
  std::size_t highway_layers = 2;
  PretrainedMode pretrained = PretrainedMode::kNone;
  std::size_t pretrained_dim = 0;  // taken from the embedding file

  // Best setups per architecture.
  static EncoderConfig defaults(EncoderKind kind);

  bool has_char_part() const { return kind != EncoderKind::kNone; }
  std::size_t char_vector_dim() const;
  // Length of the composed word vector (character part then pretrained part).
  std::size_t output_dim() const;
  std::vector<std::size_t> highway_filter_counts() const;
  void validate() const;
};

// min(max_filters, per_width * width) for a width inside the configured range.
std::size_t num_filters(std::size_t width, const EncoderConfig& config = EncoderConfig::defaults(EncoderKind::kCnnHighway));

// Words of a batch in order; chars are unpadded (length >= 1).
struct WordBatch {
  std::vector<std::vector<int>> chars;
  std::vector<int> words;

  std::size_t size() const { return std::max(chars.size(), words.size()); }
};

template <typename T>
class WordEncoder {
 public:
  virtual ~WordEncoder() = default;
  virtual std::size_t output_dim() const = 0;
  // One row per word.
  virtual Tensor<T> forward(const WordBatch& batch, Mode mode, Rng& rng) = 0;
  virtual void backward(ConstMatView<T> d_out) = 0;
};

// Builds the character/word-level encoder for cfg.kind (null for kNone).
// Parameters are registered under the "encoder." prefix.
template <typename T>
std::unique_ptr<WordEncoder<T>> make_encoder(const EncoderConfig& cfg, std::size_t char_vocab,
                                             std::size_t word_vocab, double keep_prob,
                                             RecurrentDropout recurrent_dropout, ParamStore<T>& store, Rng& rng);

// Character part first, word part second.
template <typename T>
Tensor<T> compose_word_vector(const std::optional<Tensor<T>>& char_vec, const std::optional<Tensor<T>>& word_vec);

// Suffix-preserving truncation / right padding used by the DNN encoder.
std::vector<int> fixed_length_chars(const std::vector<int>& chars, std::size_t length);

// Right-pads with the padding symbol up to min_length.
std::vector<int> pad_chars(const std::vector<int>& chars, std::size_t min_length);

}  // namespace morphtag
