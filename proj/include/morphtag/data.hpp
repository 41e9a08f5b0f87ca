#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "morphtag/rng.hpp"
#include "morphtag/tensor.hpp"

namespace morphtag {

enum class Tagset { kPos, kMorph, kPosMorph };

Tagset parse_tagset(std::string_view name);
std::string_view tagset_name(Tagset tagset);

// MORPH "_" means no features; the POSMORPH tag is then the POS alone.
std::string project_tag(const std::string& pos, const std::string& morph, Tagset tagset);

struct Sentence {
  std::vector<std::string> words;  // lowercased surface forms
  std::vector<std::string> pos;
  std::vector<std::string> morph;
  std::vector<std::string> tags;  // projection for the tag set the corpus was loaded with

  std::size_t size() const { return words.size(); }
  bool operator==(const Sentence&) const = default;
};

// One token per line "form<TAB>POS<TAB>MORPH", blank line between sentences.
std::vector<Sentence> load_corpus(const std::string& path, Tagset tagset);
std::vector<Sentence> parse_corpus(std::istream& in, Tagset tagset, const std::string& source = "<stream>");
void write_corpus(const std::string& path, const std::vector<Sentence>& sentences);
void write_corpus(std::ostream& out, const std::vector<Sentence>& sentences);

// UTF-8 helpers. Invalid bytes decode to U+FFFD.
std::vector<char32_t> utf8_decode(std::string_view s);
std::string utf8_encode(char32_t cp);
char32_t lowercase(char32_t cp);
std::string lowercase(std::string_view s);
// Code points of a word as separate UTF-8 strings.
std::vector<std::string> split_chars(std::string_view word);

class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> symbols);

  std::size_t size() const { return symbols_.size(); }
  const std::string& symbol(std::size_t id) const { return symbols_.at(id); }
  const std::vector<std::string>& symbols() const { return symbols_; }
  // -1 when absent.
  int find(const std::string& symbol) const;
  int id_or(const std::string& symbol, int fallback) const;
  // Appends if new; returns the id.
  int add(const std::string& symbol);

  bool operator==(const Vocabulary& other) const { return symbols_ == other.symbols_; }

 private:
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, int> index_;
};

inline constexpr const char* kPadSymbol = "<pad>";
inline constexpr const char* kUnkSymbol = "<unk>";

struct Vocabularies {
  Vocabulary chars;  // 0 = <pad>, 1 = <unk>, then sorted characters
  Vocabulary words;  // 0 = <unk>, then sorted word forms
  Vocabulary tags;   // sorted training tags
  std::unordered_set<int> singleton_chars;
  std::unordered_set<int> singleton_words;
};

// Built from the training split only; ids are assigned in sorted order.
Vocabularies build_vocabularies(const std::vector<Sentence>& train);

struct CoverageReport {
  std::size_t tokens = 0;
  std::size_t unseen = 0;    // 0 training occurrences
  std::size_t rare = 0;      // 1-4
  std::size_t frequent = 0;  // >= 5

  double fraction_unseen() const { return tokens ? double(unseen) / double(tokens) : 0.0; }
  double fraction_rare() const { return tokens ? double(rare) / double(tokens) : 0.0; }
  double fraction_frequent() const { return tokens ? double(frequent) / double(tokens) : 0.0; }
};

CoverageReport coverage_report(const std::vector<Sentence>& train, const std::vector<Sentence>& test);

// Pre-trained word vectors. Row 0 holds the unknown-word vector (mean of all
// loaded rows); row i > 0 belongs to words.symbol(i).
struct EmbeddingTable {
  Vocabulary words;
  Tensor<float> vectors;

  std::size_t dim() const { return vectors.cols(); }
  std::size_t size() const { return vectors.rows(); }
  int lookup(const std::string& word) const { return words.id_or(word, 0); }
  std::span<const float> vector(const std::string& word) const { return vectors.row(lookup(word)); }
};

// word2vec text format: header "V d", then "word v1 ... vd". Words are
// lowercased; duplicates keep the first vector and are reported on warn.
EmbeddingTable load_embeddings(const std::string& path, std::ostream* warn = nullptr);
EmbeddingTable parse_embeddings(std::istream& in, std::ostream* warn = nullptr,
                                const std::string& source = "<stream>");
// Table from in-memory vectors with the same lowercasing, first-wins and
// mean-row rules as the file loader.
EmbeddingTable make_embedding_table(const std::vector<std::string>& words, const Tensor<float>& vectors);
void write_embeddings(const std::string& path, const std::vector<std::string>& words, const Tensor<float>& vectors);

// Shuffled index batches covering 0..n-1; the last batch may be short.
std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, Rng& rng);

std::size_t token_count(const std::vector<Sentence>& sentences);

}  // namespace morphtag
